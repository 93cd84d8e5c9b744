use crate::manifold::{geodesic_distance, Partition, PhasePoint};

use super::{validate_samples, Curve, Result, Sample};

/// A function that is constant on each cell of a partition.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstant {
    partition: Partition,
    /// `N × d` table, one row per cell.
    coeffs: Vec<Vec<f64>>,
}

impl PiecewiseConstant {
    /// # Panics
    /// If the table does not have one row per cell, or rows differ in length.
    pub fn new(partition: Partition, coeffs: Vec<Vec<f64>>) -> Self {
        assert_eq!(coeffs.len(), partition.num_cells(), "one row per cell");
        let d = coeffs.first().map_or(0, Vec::len);
        assert!(coeffs.iter().all(|row| row.len() == d), "ragged table");
        PiecewiseConstant { partition, coeffs }
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn coeffs(&self) -> &[Vec<f64>] {
        &self.coeffs
    }

    /// Coefficients of coordinate `j`, one per cell.
    pub fn coordinate(&self, j: usize) -> Vec<f64> {
        self.coeffs.iter().map(|row| row[j]).collect()
    }
}

impl Curve for PiecewiseConstant {
    fn dim(&self) -> usize {
        self.coeffs[0].len()
    }

    fn eval_into(&self, s: PhasePoint, out: &mut [f64]) {
        out.copy_from_slice(&self.coeffs[self.partition.cell_index(s)]);
    }
}

/// An empty cell whose coefficient row was copied from `source`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FillRecord {
    pub cell: usize,
    pub source: usize,
}

/// Least-squares piecewise-constant fit: per-cell sample means, with empty
/// cells filled from the nearest nonempty cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionEstimate {
    curve: PiecewiseConstant,
    counts: Vec<usize>,
    fills: Vec<FillRecord>,
}

impl PartitionEstimate {
    /// Reassembles an estimate from stored parts (used when loading files).
    pub fn from_parts(curve: PiecewiseConstant, counts: Vec<usize>, fills: Vec<FillRecord>) -> Self {
        assert_eq!(counts.len(), curve.partition().num_cells());
        PartitionEstimate {
            curve,
            counts,
            fills,
        }
    }

    pub fn partition(&self) -> &Partition {
        self.curve.partition()
    }

    pub fn coeffs(&self) -> &[Vec<f64>] {
        self.curve.coeffs()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn fills(&self) -> &[FillRecord] {
        &self.fills
    }

    pub fn num_samples(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn as_piecewise(&self) -> &PiecewiseConstant {
        &self.curve
    }

    pub fn into_piecewise(self) -> PiecewiseConstant {
        self.curve
    }
}

impl Curve for PartitionEstimate {
    fn dim(&self) -> usize {
        self.curve.dim()
    }

    fn eval_into(&self, s: PhasePoint, out: &mut [f64]) {
        self.curve.eval_into(s, out)
    }
}

/// Minimizes the empirical risk over functions constant on the cells of
/// `partition`.
///
/// The risk separates by cell and by coordinate, so each coefficient is the
/// mean of `x^j` over the samples in its cell. A cell with no samples takes
/// the row of the nearest nonempty cell (geodesic distance between
/// representatives, ties to the lower index); every such fill is recorded.
pub fn fit_partition(samples: &[Sample], partition: &Partition) -> Result<PartitionEstimate> {
    let d = validate_samples(samples)?;
    let mut sums = CellSums::new(partition.level(), d);
    for sample in samples {
        sums.add(sample.s, &sample.x);
    }
    sums.finish(partition)
}

/// Per-cell sample counts and coordinate sums at one dyadic level: the
/// sufficient statistics of the partition fit.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSums {
    level: u32,
    dim: usize,
    counts: Vec<usize>,
    sums: Vec<f64>,
}

impl CellSums {
    pub fn new(level: u32, dim: usize) -> Self {
        let n = 1usize << level;
        CellSums {
            level,
            dim,
            counts: vec![0; n],
            sums: vec![0.0; n * dim],
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Adds one observation. `x` must have length `dim`.
    #[inline]
    pub fn add(&mut self, s: PhasePoint, x: &[f64]) {
        let n = self.counts.len();
        let k = ((s.value() * n as f64) as usize).min(n - 1);
        self.counts[k] += 1;
        let d = self.dim;
        for (acc, v) in self.sums[k * d..(k + 1) * d].iter_mut().zip(x) {
            *acc += v;
        }
    }

    /// Statistics of the parent level, merging sibling cells.
    pub fn coarsen(&self) -> Option<CellSums> {
        let level = self.level.checked_sub(1)?;
        let d = self.dim;
        let n = 1usize << level;
        let counts = (0..n).map(|k| self.counts[2 * k] + self.counts[2 * k + 1]).collect();
        let mut sums = vec![0.0; n * d];
        for k in 0..n {
            for j in 0..d {
                sums[k * d + j] = self.sums[2 * k * d + j] + self.sums[(2 * k + 1) * d + j];
            }
        }
        Some(CellSums {
            level,
            dim: d,
            counts,
            sums,
        })
    }

    /// Per-cell means with the empty-cell fill applied.
    ///
    /// # Panics
    /// If `partition` is not at this level.
    pub fn finish(&self, partition: &Partition) -> Result<PartitionEstimate> {
        assert_eq!(partition.level(), self.level, "partition level mismatch");
        let d = self.dim;
        let n = self.counts.len();
        let counts = self.counts.clone();
        let nonempty: Vec<usize> = (0..n).filter(|&k| counts[k] > 0).collect();
        if nonempty.is_empty() {
            return Err(super::EstimateError::NoSamples);
        }

        let mut coeffs: Vec<Vec<f64>> = self
            .sums
            .chunks_exact(d)
            .zip(&counts)
            .map(|(row, &c)| {
                if c == 0 {
                    vec![0.0; d]
                } else {
                    row.iter().map(|v| v / c as f64).collect()
                }
            })
            .collect();

        let reps = partition.representatives();
        let mut fills = Vec::new();
        for k in (0..n).filter(|&k| counts[k] == 0) {
            // representatives are in cell order around the circle, so the
            // nearest nonempty cell is the circular predecessor or successor
            let pos = nonempty.partition_point(|&j| j < k);
            let next = nonempty[pos % nonempty.len()];
            let prev = nonempty[(pos + nonempty.len() - 1) % nonempty.len()];
            let d_prev = geodesic_distance(reps[k], reps[prev]);
            let d_next = geodesic_distance(reps[k], reps[next]);
            let source = if d_prev < d_next || (d_prev == d_next && prev < next) {
                prev
            } else {
                next
            };
            coeffs[k] = coeffs[source].clone();
            fills.push(FillRecord { cell: k, source });
        }

        Ok(PartitionEstimate {
            curve: PiecewiseConstant::new(partition.clone(), coeffs),
            counts,
            fills,
        })
    }
}
