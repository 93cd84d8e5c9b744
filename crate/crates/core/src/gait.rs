//! Conversion of timestamped marker trajectories into phase samples.
//!
//! Each stride `(t_p, T_p)` maps clock time affinely onto the circle,
//! `s = (t - t_p) / T_p`. Timestamps outside every stride are dropped and
//! counted. A timestamp that overshoots the end of its stride by at most
//! `1e-9 · T_p` (timestamp jitter) stays in that stride and its phase wraps
//! to just above zero.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::Sample;
use crate::manifold::PhasePoint;

/// Relative overshoot past `t_p + T_p` still credited to a stride.
pub const STRIDE_END_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaitError {
    #[error("trajectory has {timestamps} timestamps but {rows} position rows")]
    RowCountMismatch { timestamps: usize, rows: usize },
    #[error("timestamps must be strictly increasing (row {row})")]
    NonIncreasingTime { row: usize },
    #[error("non-finite value in row {row}")]
    NonFinite { row: usize },
    #[error("row {row} has {got} coordinates, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("trajectory has no coordinate columns")]
    NoColumns,
    #[error("{columns} column names for {width} coordinates")]
    ColumnCount { columns: usize, width: usize },
    #[error("stride {index}: period must be finite and positive, got {period}")]
    InvalidPeriod { index: usize, period: f64 },
    #[error("stride {index}: start time must be finite")]
    InvalidStart { index: usize },
    #[error("stride {index} overlaps or precedes stride {prev}")]
    OverlappingStrides { index: usize, prev: usize },
    #[error("segmentation has no strides")]
    NoStrides,
    #[error("no timestamp falls inside any stride")]
    NoCoveredTimestamps,
    #[error("stride {stride} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        stride: usize,
        expected: usize,
        got: usize,
    },
}

pub type Result<T> = std::result::Result<T, GaitError>;

/// Sampled marker positions over time.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    timestamps: Vec<f64>,
    positions: Vec<Vec<f64>>,
    columns: Vec<String>,
}

impl Trajectory {
    pub fn new(timestamps: Vec<f64>, positions: Vec<Vec<f64>>, columns: Vec<String>) -> Result<Self> {
        if timestamps.len() != positions.len() {
            return Err(GaitError::RowCountMismatch {
                timestamps: timestamps.len(),
                rows: positions.len(),
            });
        }
        if columns.is_empty() {
            return Err(GaitError::NoColumns);
        }
        let width = columns.len();
        for (row, (t, x)) in timestamps.iter().zip(&positions).enumerate() {
            if x.len() != width {
                return Err(GaitError::RaggedRow {
                    row,
                    expected: width,
                    got: x.len(),
                });
            }
            if !t.is_finite() || x.iter().any(|v| !v.is_finite()) {
                return Err(GaitError::NonFinite { row });
            }
            if row > 0 && *t <= timestamps[row - 1] {
                return Err(GaitError::NonIncreasingTime { row });
            }
        }
        Ok(Trajectory {
            timestamps,
            positions,
            columns,
        })
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn positions(&self) -> &[Vec<f64>] {
        &self.positions
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Marker labels: one per `<name>_x,<name>_y,<name>_z` triple when the
    /// columns follow that pattern, otherwise one per column.
    pub fn marker_names(&self) -> Vec<String> {
        marker_names(&self.columns).unwrap_or_else(|| self.columns.clone())
    }
}

/// Marker names if `columns` is a sequence of `_x,_y,_z` triples.
pub fn marker_names(columns: &[String]) -> Option<Vec<String>> {
    if columns.is_empty() || !columns.len().is_multiple_of(3) {
        return None;
    }
    columns
        .chunks_exact(3)
        .map(|c| {
            let name = c[0].strip_suffix("_x")?;
            (!name.is_empty()
                && c[1].strip_suffix("_y") == Some(name)
                && c[2].strip_suffix("_z") == Some(name))
            .then(|| name.to_string())
        })
        .collect()
}

/// One gait cycle: start time `t_p` and period `T_p`, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stride {
    #[serde(rename = "t_p")]
    pub start: f64,
    #[serde(rename = "T_p")]
    pub period: f64,
}

impl Stride {
    pub fn end(&self) -> f64 {
        self.start + self.period
    }

    /// `(t - t_p) / T_p`, wrapped onto the circle.
    pub fn phase_of(&self, t: f64) -> PhasePoint {
        PhasePoint::new((t - self.start) / self.period).expect("finite stride and time")
    }
}

/// Time-ordered, non-overlapping strides.
#[derive(Debug, Clone, PartialEq)]
pub struct GaitSegmentation {
    strides: Vec<Stride>,
}

impl GaitSegmentation {
    pub fn new(strides: Vec<Stride>) -> Result<Self> {
        if strides.is_empty() {
            return Err(GaitError::NoStrides);
        }
        for (index, s) in strides.iter().enumerate() {
            if !s.start.is_finite() {
                return Err(GaitError::InvalidStart { index });
            }
            if !(s.period.is_finite() && s.period > 0.0) {
                return Err(GaitError::InvalidPeriod {
                    index,
                    period: s.period,
                });
            }
            if index > 0 && s.start < strides[index - 1].end() {
                return Err(GaitError::OverlappingStrides {
                    index,
                    prev: index - 1,
                });
            }
        }
        Ok(GaitSegmentation { strides })
    }

    /// `count` back-to-back strides of equal period starting at `start`.
    pub fn periodic(start: f64, period: f64, count: usize) -> Result<Self> {
        let mut strides: Vec<Stride> = Vec::with_capacity(count);
        for _ in 0..count {
            let start = strides.last().map_or(start, Stride::end);
            strides.push(Stride { start, period });
        }
        Self::new(strides)
    }

    pub fn strides(&self) -> &[Stride] {
        &self.strides
    }

    /// Index of the stride that owns time `t`, if any.
    pub fn stride_of(&self, t: f64) -> Option<usize> {
        let idx = self.strides.partition_point(|s| s.start <= t);
        let cand = idx.checked_sub(1)?;
        let s = &self.strides[cand];
        let within = t < s.end() || t - s.end() <= STRIDE_END_TOLERANCE * s.period;
        within.then_some(cand)
    }
}

/// Phase samples grouped by stride.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMapping {
    /// One list per stride, in stride order (possibly empty).
    pub per_stride: Vec<Vec<Sample>>,
    /// Timestamps that fell outside every stride.
    pub dropped: usize,
}

impl PhaseMapping {
    pub fn emitted(&self) -> usize {
        self.per_stride.iter().map(Vec::len).sum()
    }
}

/// Maps every covered timestamp to `(s, x)` with `s = (t - t_p)/T_p`.
pub fn phase_map(traj: &Trajectory, seg: &GaitSegmentation) -> Result<PhaseMapping> {
    let mut per_stride = vec![Vec::new(); seg.strides().len()];
    let mut dropped = 0;
    for (t, x) in traj.timestamps().iter().zip(traj.positions()) {
        match seg.stride_of(*t) {
            Some(k) => {
                per_stride[k].push(Sample::new(seg.strides()[k].phase_of(*t), x.clone()));
            }
            None => dropped += 1,
        }
    }
    if per_stride.iter().all(Vec::is_empty) {
        return Err(GaitError::NoCoveredTimestamps);
    }
    Ok(PhaseMapping {
        per_stride,
        dropped,
    })
}

/// Samples pooled over strides, with the stride each one came from.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledSamples {
    pub samples: Vec<Sample>,
    pub stride: Vec<usize>,
}

/// Concatenates per-stride samples in stride-major order.
pub fn pool_strides(per_stride: Vec<Vec<Sample>>) -> Result<PooledSamples> {
    if per_stride.is_empty() {
        return Err(GaitError::NoStrides);
    }
    let expected = per_stride.iter().flatten().next().map(Sample::dim);
    let mut samples = Vec::new();
    let mut stride = Vec::new();
    for (k, group) in per_stride.into_iter().enumerate() {
        for sample in group {
            if Some(sample.dim()) != expected {
                return Err(GaitError::DimensionMismatch {
                    stride: k,
                    expected: expected.unwrap_or(0),
                    got: sample.dim(),
                });
            }
            stride.push(k);
            samples.push(sample);
        }
    }
    Ok(PooledSamples { samples, stride })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::fit_partition;
    use crate::manifold::make_partition;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cols(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn stride(start: f64, period: f64) -> Stride {
        Stride { start, period }
    }

    #[test]
    fn formula_point_check() {
        let seg = GaitSegmentation::new(vec![stride(1.0, 0.5)]).unwrap();
        let traj = Trajectory::new(vec![1.0, 1.25], vec![vec![3.0], vec![4.0]], cols(&["a"])).unwrap();
        let map = phase_map(&traj, &seg).unwrap();
        assert_eq!(map.per_stride[0][0].s.value(), 0.0);
        assert_eq!(map.per_stride[0][1].s.value(), 0.5);
        assert_eq!(map.per_stride[0][1].x, vec![4.0]);
    }

    #[test]
    fn round_trip_recovers_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (tp, period) = (2.375, 0.8125);
        let mut us: Vec<f64> = (0..100).map(|_| rng.random()).collect();
        us.sort_by(f64::total_cmp);
        let ts: Vec<f64> = us.iter().map(|u| tp + u * period).collect();
        let xs: Vec<Vec<f64>> = us.iter().map(|u| vec![u.sin(), u.cos(), 2.0 * u]).collect();
        let traj = Trajectory::new(ts, xs.clone(), cols(&["m_x", "m_y", "m_z"])).unwrap();
        let seg = GaitSegmentation::new(vec![stride(tp, period)]).unwrap();
        let map = phase_map(&traj, &seg).unwrap();
        assert_eq!(map.dropped, 0);
        for ((smp, u), x) in map.per_stride[0].iter().zip(&us).zip(&xs) {
            assert!((smp.s.value() - u).abs() < 1e-12);
            assert_eq!(&smp.x, x);
        }
    }

    #[test]
    fn drops_and_counts_uncovered_timestamps() {
        let seg = GaitSegmentation::new(vec![stride(1.0, 1.0), stride(3.0, 1.0)]).unwrap();
        let ts = vec![0.5, 1.0, 1.5, 2.5, 3.2, 4.0 + 1e-12, 4.5];
        let xs = ts.iter().map(|t| vec![*t]).collect();
        let traj = Trajectory::new(ts.clone(), xs, cols(&["a"])).unwrap();
        let map = phase_map(&traj, &seg).unwrap();
        assert_eq!(map.dropped, 3);
        assert_eq!(map.emitted() + map.dropped, ts.len());
        // 4.0 + 1e-12 overshoots stride 1 within tolerance and wraps
        let last = map.per_stride[1].last().unwrap();
        assert!(last.s.value() < 1e-9);
        for group in &map.per_stride {
            assert!(group.iter().all(|s| (0.0..1.0).contains(&s.s.value())));
        }
    }

    #[test]
    fn contiguous_strides_hand_over_at_boundary() {
        let seg = GaitSegmentation::periodic(0.0, 0.5, 3).unwrap();
        assert_eq!(seg.stride_of(0.5), Some(1));
        assert_eq!(seg.stride_of(1.5), Some(2));
        assert_eq!(seg.stride_of(1.5 + 1e-6), None);
        assert_eq!(seg.stride_of(-0.1), None);
    }

    #[test]
    fn no_covered_timestamp_is_an_error() {
        let seg = GaitSegmentation::new(vec![stride(10.0, 1.0)]).unwrap();
        let traj = Trajectory::new(vec![0.0, 1.0], vec![vec![0.0], vec![1.0]], cols(&["a"])).unwrap();
        assert_eq!(phase_map(&traj, &seg), Err(GaitError::NoCoveredTimestamps));
    }

    #[test]
    fn segmentation_validation() {
        assert_eq!(GaitSegmentation::new(vec![]), Err(GaitError::NoStrides));
        assert!(matches!(
            GaitSegmentation::new(vec![stride(0.0, 0.0)]),
            Err(GaitError::InvalidPeriod { index: 0, .. })
        ));
        assert_eq!(
            GaitSegmentation::new(vec![stride(0.0, 1.0), stride(0.5, 1.0)]),
            Err(GaitError::OverlappingStrides { index: 1, prev: 0 })
        );
        assert!(GaitSegmentation::new(vec![stride(0.0, 1.0), stride(1.0, 1.0)]).is_ok());
    }

    #[test]
    fn trajectory_validation() {
        let c = cols(&["a"]);
        assert!(matches!(
            Trajectory::new(vec![0.0, 0.0], vec![vec![1.0], vec![1.0]], c.clone()),
            Err(GaitError::NonIncreasingTime { row: 1 })
        ));
        assert!(matches!(
            Trajectory::new(vec![0.0], vec![vec![f64::NAN]], c.clone()),
            Err(GaitError::NonFinite { row: 0 })
        ));
        assert!(matches!(
            Trajectory::new(vec![0.0], vec![vec![1.0, 2.0]], c),
            Err(GaitError::RaggedRow { .. })
        ));
    }

    #[test]
    fn marker_names_from_triples() {
        let c = cols(&["hip_x", "hip_y", "hip_z", "toe_x", "toe_y", "toe_z"]);
        assert_eq!(marker_names(&c), Some(cols(&["hip", "toe"])));
        assert_eq!(marker_names(&cols(&["hip_x", "hip_y", "toe_z"])), None);
        let t = Trajectory::new(vec![0.0], vec![vec![1.0, 2.0]], cols(&["a", "b"])).unwrap();
        assert_eq!(t.marker_names(), cols(&["a", "b"]));
    }

    #[test]
    fn pooling() {
        let mk = |n: usize, d: usize| -> Vec<Sample> {
            (0..n)
                .map(|i| Sample::new(PhasePoint::new(i as f64 / n as f64).unwrap(), vec![i as f64; d]))
                .collect()
        };
        let one = pool_strides(vec![mk(5, 2)]).unwrap();
        assert_eq!(one.samples, mk(5, 2));
        let two = pool_strides(vec![mk(10, 1), mk(10, 1)]).unwrap();
        assert_eq!(two.samples.len(), 20);
        assert_eq!(two.stride, [vec![0; 10], vec![1; 10]].concat());
        assert!(matches!(
            pool_strides(vec![mk(3, 1), mk(3, 2)]),
            Err(GaitError::DimensionMismatch { stride: 1, .. })
        ));
        assert_eq!(pool_strides(vec![]), Err(GaitError::NoStrides));
    }

    #[test]
    fn duplicated_strides_fit_like_a_single_stride() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let stride: Vec<Sample> = (0..64)
            .map(|_| {
                let s = PhasePoint::new(rng.random()).unwrap();
                Sample::new(s, vec![rng.random_range(-1.0..1.0)])
            })
            .collect();
        let part = make_partition(3).unwrap();
        let single = fit_partition(&stride, &part).unwrap();
        let pooled = pool_strides(vec![stride.clone(), stride.clone()]).unwrap();
        let doubled = fit_partition(&pooled.samples, &part).unwrap();
        for (a, b) in single.coeffs().iter().zip(doubled.coeffs()) {
            assert!((a[0] - b[0]).abs() < 1e-15);
        }
    }
}
