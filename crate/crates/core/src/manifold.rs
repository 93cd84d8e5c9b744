//! Geometry of the phase circle S¹.
//!
//! Phases are stored as fractions of one period in `[0, 1)`. The circle is
//! embedded in the plane as `(cos 2πs, sin 2πs)`, which gives the chordal
//! metric used by the kernel estimator; the intrinsic (geodesic) metric is
//! the wraparound distance `min(|a-b|, 1-|a-b|)`.
//!
//! Partitions are uniform dyadic arcs: level `n` has `2^n` half-open cells
//! `[k/N, (k+1)/N)`, and every cell of level `n` is the union of two cells
//! of level `n + 1`.

use std::f64::consts::{PI, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifoldError {
    #[error("phase must be finite, got {0}")]
    NonFinitePhase(f64),
    #[error("partition level {level} exceeds the cap of {max} (2^{level} cells)")]
    LevelTooLarge { level: u32, max: u32 },
    #[error("expected {expected} representatives, got {got}")]
    RepresentativeCount { expected: usize, got: usize },
    #[error("representative {phase} does not lie in cell {cell}")]
    RepresentativeOutsideCell { cell: usize, phase: f64 },
    #[error("point set is empty")]
    EmptyPointSet,
    #[error("quadrature needs at least 2 points, got {0}")]
    QuadratureTooCoarse(usize),
    #[error("invalid von Mises concentration {0} (must be finite and in [0, {max}])", max = VON_MISES_MAX_KAPPA)]
    InvalidConcentration(f64),
}

pub type Result<T> = std::result::Result<T, ManifoldError>;

/// A point on S¹, stored as a phase in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct PhasePoint(f64);

impl PhasePoint {
    pub const ZERO: PhasePoint = PhasePoint(0.0);

    /// Wraps any finite real onto the circle.
    pub fn new(s: f64) -> Result<Self> {
        if !s.is_finite() {
            return Err(ManifoldError::NonFinitePhase(s));
        }
        Ok(PhasePoint(wrap_unit(s)))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// Moves the phase by `delta` periods, wrapping around.
    pub fn offset(self, delta: f64) -> Result<Self> {
        PhasePoint::new(self.0 + delta)
    }

    /// Plane embedding `(cos 2πs, sin 2πs)`.
    pub fn embed(self) -> [f64; 2] {
        let (sin, cos) = (TAU * self.0).sin_cos();
        [cos, sin]
    }
}

#[inline]
fn wrap_unit(s: f64) -> f64 {
    let w = s - s.floor();
    // s slightly below an integer can round up to exactly 1.0
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

impl TryFrom<f64> for PhasePoint {
    type Error = ManifoldError;

    fn try_from(s: f64) -> Result<Self> {
        PhasePoint::new(s)
    }
}

impl From<PhasePoint> for f64 {
    fn from(p: PhasePoint) -> f64 {
        p.0
    }
}

impl fmt::Display for PhasePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Intrinsic arc-length distance, in periods. Always in `[0, 1/2]`.
#[inline]
pub fn geodesic_distance(a: PhasePoint, b: PhasePoint) -> f64 {
    let d = (a.0 - b.0).abs();
    d.min(1.0 - d)
}

/// Euclidean distance between the plane embeddings of `a` and `b`.
#[inline]
pub fn chordal_distance(a: PhasePoint, b: PhasePoint) -> f64 {
    2.0 * (PI * geodesic_distance(a, b)).sin()
}

/// Dyadic partition of S¹ into `2^level` equal arcs with one representative
/// per arc.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    level: u32,
    representatives: Vec<PhasePoint>,
}

impl Partition {
    pub const MAX_LEVEL: u32 = 20;

    /// Level-`n` partition with arc midpoints as representatives.
    pub fn dyadic(level: u32) -> Result<Self> {
        check_level(level)?;
        let n = 1usize << level;
        let representatives = (0..n)
            .map(|k| PhasePoint((k as f64 + 0.5) / n as f64))
            .collect();
        Ok(Partition {
            level,
            representatives,
        })
    }

    /// Level-`n` partition with caller-chosen representatives, one per cell
    /// in cell order.
    pub fn with_representatives(level: u32, representatives: Vec<PhasePoint>) -> Result<Self> {
        check_level(level)?;
        let n = 1usize << level;
        if representatives.len() != n {
            return Err(ManifoldError::RepresentativeCount {
                expected: n,
                got: representatives.len(),
            });
        }
        let partition = Partition {
            level,
            representatives,
        };
        for (k, rep) in partition.representatives.iter().enumerate() {
            if partition.cell_index(*rep) != k {
                return Err(ManifoldError::RepresentativeOutsideCell {
                    cell: k,
                    phase: rep.0,
                });
            }
        }
        Ok(partition)
    }

    #[inline]
    pub fn level(&self) -> u32 {
        self.level
    }

    /// `N(n) = 2^n`.
    #[inline]
    pub fn num_cells(&self) -> usize {
        1usize << self.level
    }

    /// Index of the cell containing `s`: `floor(s · N)`.
    #[inline]
    pub fn cell_index(&self, s: PhasePoint) -> usize {
        // s < 1 and N is a power of two, so s·N is exact and < N
        let k = (s.0 * self.num_cells() as f64) as usize;
        k.min(self.num_cells() - 1)
    }

    /// Half-open bounds `[k/N, (k+1)/N)` of cell `k`.
    pub fn cell_bounds(&self, k: usize) -> (f64, f64) {
        let n = self.num_cells() as f64;
        (k as f64 / n, (k + 1) as f64 / n)
    }

    /// Width of every cell, `1/N`.
    pub fn cell_width(&self) -> f64 {
        1.0 / self.num_cells() as f64
    }

    pub fn representatives(&self) -> &[PhasePoint] {
        &self.representatives
    }

    /// Index of the level-`(n-1)` cell containing cell `k`.
    pub fn parent_index(k: usize) -> usize {
        k >> 1
    }
}

fn check_level(level: u32) -> Result<()> {
    if level > Partition::MAX_LEVEL {
        return Err(ManifoldError::LevelTooLarge {
            level,
            max: Partition::MAX_LEVEL,
        });
    }
    Ok(())
}

/// Convenience alias for [`Partition::dyadic`].
pub fn make_partition(level: u32) -> Result<Partition> {
    Partition::dyadic(level)
}

/// Fill distance `max_s min_ξ d(s, ξ)` of a point set under the geodesic
/// metric: half the largest circular gap between sorted points.
pub fn fill_distance(points: &[PhasePoint]) -> Result<f64> {
    if points.is_empty() {
        return Err(ManifoldError::EmptyPointSet);
    }
    let mut sorted: Vec<f64> = points.iter().map(|p| p.0).collect();
    sorted.sort_by(f64::total_cmp);
    let wrap_gap = sorted[0] + 1.0 - sorted[sorted.len() - 1];
    let max_gap = sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(wrap_gap, f64::max);
    Ok(0.5 * max_gap)
}

pub const VON_MISES_MAX_KAPPA: f64 = 500.0;

/// Marginal sampling measure on S¹.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasureOnS {
    Uniform,
    /// Von Mises law with mean phase `mean` and concentration `kappa`
    /// (in angle units, so the density in phase is
    /// `exp(κ cos 2π(s-mean)) / I₀(κ)`).
    VonMises { mean: PhasePoint, kappa: f64 },
    /// Mass `1/m` at each listed phase.
    Empirical(Vec<PhasePoint>),
}

impl MeasureOnS {
    pub fn von_mises(mean: PhasePoint, kappa: f64) -> Result<Self> {
        if !kappa.is_finite() || !(0.0..=VON_MISES_MAX_KAPPA).contains(&kappa) {
            return Err(ManifoldError::InvalidConcentration(kappa));
        }
        Ok(MeasureOnS::VonMises { mean, kappa })
    }

    pub fn empirical(points: Vec<PhasePoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(ManifoldError::EmptyPointSet);
        }
        Ok(MeasureOnS::Empirical(points))
    }

    /// Density with respect to arc length in phase units, for the analytic
    /// kinds. `None` for the empirical kind.
    pub fn density(&self, s: PhasePoint) -> Option<f64> {
        match self {
            MeasureOnS::Uniform => Some(1.0),
            MeasureOnS::VonMises { mean, kappa } => {
                let c = (TAU * (s.0 - mean.0)).cos();
                Some((kappa * (c - 1.0)).exp() / bessel_i0_scaled(*kappa))
            }
            MeasureOnS::Empirical(_) => None,
        }
    }

    pub fn is_analytic(&self) -> bool {
        !matches!(self, MeasureOnS::Empirical(_))
    }

    /// Point masses `(phase, weight)` that represent this measure on `quad`.
    /// Analytic kinds use the quadrature nodes weighted by the density; the
    /// empirical kind ignores `quad`.
    pub fn discretize(&self, quad: &Quadrature) -> Vec<(PhasePoint, f64)> {
        match self {
            MeasureOnS::Empirical(points) => {
                let w = 1.0 / points.len() as f64;
                points.iter().map(|&p| (p, w)).collect()
            }
            _ => quad
                .points
                .iter()
                .zip(&quad.weights)
                .map(|(&p, &w)| (p, w * self.density(p).unwrap_or(0.0)))
                .collect(),
        }
    }
}

/// `e^{-κ} I₀(κ)` by its power series, summed with the scale factor folded
/// into the first term so nothing overflows for κ up to the cap.
fn bessel_i0_scaled(kappa: f64) -> f64 {
    let q = 0.25 * kappa * kappa;
    let mut term = (-kappa).exp();
    let mut sum = term;
    let mut k = 1.0;
    loop {
        term *= q / (k * k);
        sum += term;
        if k > 0.5 * kappa && term < 1e-17 * sum {
            break;
        }
        k += 1.0;
    }
    sum
}

/// Composite midpoint rule on S¹ with `M` equal-weight nodes `(i + ½)/M`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    points: Vec<PhasePoint>,
    weights: Vec<f64>,
}

impl Quadrature {
    pub fn midpoint(resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(ManifoldError::QuadratureTooCoarse(resolution));
        }
        let m = resolution as f64;
        let points = (0..resolution)
            .map(|i| PhasePoint((i as f64 + 0.5) / m))
            .collect();
        Ok(Quadrature {
            points,
            weights: vec![1.0 / m; resolution],
        })
    }

    /// Default resolution `max(4096, 64·N)` for a partition, which is always a
    /// multiple of `N` so every cell gets the same number of nodes.
    pub fn for_partition(partition: &Partition) -> Self {
        Self::midpoint(Self::default_resolution(partition.level()))
            .expect("default resolution is at least 4096")
    }

    pub fn default_resolution(level: u32) -> usize {
        4096usize.max(64usize << level)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[PhasePoint] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// `∫_S f dμ` by quadrature (analytic measures) or by the sample mean
/// (empirical measure).
pub fn integrate<F>(f: F, measure: &MeasureOnS, quad: &Quadrature) -> f64
where
    F: Fn(PhasePoint) -> f64,
{
    let mut acc = crate::stats::KahanSum::default();
    for (p, w) in measure.discretize(quad) {
        if w != 0.0 {
            acc.add(w * f(p));
        }
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(s: f64) -> PhasePoint {
        PhasePoint::new(s).unwrap()
    }

    #[test]
    fn wraps_into_unit_interval() {
        assert_eq!(p(1.25).value(), 0.25);
        assert_eq!(p(-0.25).value(), 0.75);
        assert_eq!(p(1.0).value(), 0.0);
        assert_eq!(p(-1e-18).value(), 0.0);
        assert!(PhasePoint::new(f64::NAN).is_err());
        assert!(PhasePoint::new(f64::INFINITY).is_err());
    }

    #[test]
    fn geodesic_examples() {
        assert_eq!(geodesic_distance(p(0.0), p(0.0)), 0.0);
        assert!((geodesic_distance(p(0.1), p(0.9)) - 0.2).abs() < 1e-15);
        assert_eq!(geodesic_distance(p(0.25), p(0.75)), 0.5);
    }

    #[test]
    fn chordal_examples() {
        assert_eq!(chordal_distance(p(0.0), p(0.0)), 0.0);
        assert!((chordal_distance(p(0.0), p(0.5)) - 2.0).abs() < 1e-15);
        assert!((chordal_distance(p(0.0), p(0.25)) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn partition_examples() {
        let p0 = make_partition(0).unwrap();
        assert_eq!(p0.num_cells(), 1);
        assert_eq!(p0.representatives()[0].value(), 0.5);

        let p2 = make_partition(2).unwrap();
        assert_eq!(p2.num_cells(), 4);
        assert_eq!(p2.cell_index(p(0.6)), 2);

        let p3 = make_partition(3).unwrap();
        let (a3, b3) = p3.cell_bounds(2);
        assert_eq!((a3, b3), (0.25, 0.375));
        let (a2, b2) = p2.cell_bounds(Partition::parent_index(2));
        assert_eq!((a2, b2), (0.25, 0.5));

        assert!(matches!(
            make_partition(21),
            Err(ManifoldError::LevelTooLarge { level: 21, .. })
        ));
        assert_eq!(make_partition(20).unwrap().num_cells(), 1 << 20);
    }

    #[test]
    fn custom_representatives_must_sit_in_their_cells() {
        let ok = Partition::with_representatives(1, vec![p(0.1), p(0.9)]);
        assert!(ok.is_ok());
        let bad = Partition::with_representatives(1, vec![p(0.6), p(0.9)]);
        assert!(matches!(
            bad,
            Err(ManifoldError::RepresentativeOutsideCell { cell: 0, .. })
        ));
        assert!(Partition::with_representatives(1, vec![p(0.1)]).is_err());
    }

    #[test]
    fn fill_distance_examples() {
        assert_eq!(fill_distance(&[p(0.5)]).unwrap(), 0.5);
        let reps = make_partition(2).unwrap().representatives().to_vec();
        assert_eq!(fill_distance(&reps).unwrap(), 0.125);
        assert!(matches!(
            fill_distance(&[]),
            Err(ManifoldError::EmptyPointSet)
        ));
    }

    #[test]
    fn fill_distance_of_levels_is_exact_and_decreasing() {
        let mut prev = f64::INFINITY;
        for level in 0..=12 {
            let part = make_partition(level).unwrap();
            let h = fill_distance(part.representatives()).unwrap();
            assert_eq!(h, 0.5 / part.num_cells() as f64);
            assert!(h < prev);
            prev = h;
        }
    }

    #[test]
    fn fill_distance_matches_grid_search() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<PhasePoint> = (0..50).map(|_| p(rng.random::<f64>())).collect();
        let grid = 100_000;
        let brute = (0..grid)
            .map(|i| {
                let s = p(i as f64 / grid as f64);
                pts.iter()
                    .map(|&q| geodesic_distance(s, q))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max);
        let h = fill_distance(&pts).unwrap();
        assert!((h - brute).abs() < 1e-5, "{h} vs {brute}");
    }

    #[test]
    fn integrate_examples() {
        let quad = Quadrature::midpoint(4096).unwrap();
        let u = MeasureOnS::Uniform;
        assert!((integrate(|_| 1.0, &u, &quad) - 1.0).abs() < 1e-12);
        assert!(integrate(|s| (TAU * s.value()).cos(), &u, &quad).abs() < 1e-10);
        let c2 = integrate(|s| (TAU * s.value()).cos().powi(2), &u, &quad);
        assert!((c2 - 0.5).abs() < 1e-8);
        assert!(Quadrature::midpoint(1).is_err());
    }

    #[test]
    fn quadrature_weights_sum_to_one() {
        for m in [2, 3, 100, 4096] {
            let q = Quadrature::midpoint(m).unwrap();
            let total: f64 = q.weights().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        assert_eq!(Quadrature::default_resolution(3), 4096);
        assert_eq!(Quadrature::default_resolution(10), 65536);
    }

    #[test]
    fn von_mises_density_is_normalized() {
        let quad = Quadrature::midpoint(4096).unwrap();
        for kappa in [0.0, 0.5, 2.0, 10.0, 80.0, 500.0] {
            let m = MeasureOnS::von_mises(p(0.3), kappa).unwrap();
            let mass = integrate(|_| 1.0, &m, &quad);
            assert!((mass - 1.0).abs() < 1e-10, "kappa {kappa}: {mass}");
            assert!(m.density(p(0.8)).unwrap() >= 0.0);
        }
        assert!(MeasureOnS::von_mises(p(0.0), -1.0).is_err());
        assert!(MeasureOnS::von_mises(p(0.0), 1e4).is_err());
    }

    #[test]
    fn bessel_series_matches_reference_values() {
        // I0(1) = 1.2660658777520082, I0(10) = 2815.716628466254
        assert!((bessel_i0_scaled(1.0) * 1f64.exp() - 1.2660658777520082).abs() < 1e-14);
        let i10 = bessel_i0_scaled(10.0) * 10f64.exp();
        assert!((i10 / 2815.716628466254 - 1.0).abs() < 1e-13);
    }

    #[test]
    fn empirical_measure_is_sample_mean() {
        let m = MeasureOnS::empirical(vec![p(0.1), p(0.2), p(0.7)]).unwrap();
        let quad = Quadrature::midpoint(16).unwrap();
        let v = integrate(|s| s.value(), &m, &quad);
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
        assert!(MeasureOnS::empirical(vec![]).is_err());
    }

    proptest! {
        #[test]
        fn geodesic_triangle_inequality(a in 0.0..1.0f64, b in 0.0..1.0f64, c in 0.0..1.0f64) {
            let (a, b, c) = (p(a), p(b), p(c));
            let dab = geodesic_distance(a, b);
            prop_assert!(dab <= geodesic_distance(a, c) + geodesic_distance(c, b) + 1e-15);
            prop_assert!((0.0..=0.5).contains(&dab));
            prop_assert_eq!(dab, geodesic_distance(b, a));
        }

        #[test]
        fn chordal_matches_embedding(a in -3.0..3.0f64, b in -3.0..3.0f64) {
            let (a, b) = (p(a), p(b));
            let [x1, y1] = a.embed();
            let [x2, y2] = b.embed();
            let euclid = ((x1 - x2).powi(2) + (y1 - y2).powi(2)).sqrt();
            prop_assert!((chordal_distance(a, b) - euclid).abs() < 1e-12);
        }

        #[test]
        fn cells_are_exact_and_nested(s in 0.0..1.0f64, level in 1u32..16) {
            let s = p(s);
            let fine = Partition::dyadic(level).unwrap();
            let coarse = Partition::dyadic(level - 1).unwrap();
            let k = fine.cell_index(s);
            let (lo, hi) = fine.cell_bounds(k);
            prop_assert!(lo <= s.value() && s.value() < hi);
            prop_assert_eq!(Partition::parent_index(k), coarse.cell_index(s));
        }
    }
}
