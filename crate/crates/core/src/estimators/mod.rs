//! Empirical-risk minimizers for a closed curve `γ: S¹ → ℝ^d`.
//!
//! Two approximant spaces are supported:
//!
//! * piecewise constants on a dyadic [`Partition`], whose least-squares
//!   solution is the per-cell sample mean ([`fit_partition`]);
//! * spans of exponential kernels `exp(-β·dist(ξ, s)²)` centered on a set of
//!   phases, solved as a (ridge-regularized) linear least-squares problem
//!   ([`fit_kernel`]).
//!
//! Both estimates implement [`Curve`], as do the analytic regressors in
//! [`crate::synth`], so the risk and `L²_μ` error functions accept any of
//! them.

mod kernel;
mod partition;
mod projection;

pub use kernel::{
    fit_kernel, gram_condition, kernel_value, KernelEstimate, KernelMetric,
    MAX_UNREGULARIZED_CONDITION,
};
pub use partition::{fit_partition, CellSums, FillRecord, PartitionEstimate, PiecewiseConstant};
pub use projection::{
    estimate_approx_rate, l2_error, l2_error_sq, project_curve, project_l2, ApproxRate,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifold::{ManifoldError, Partition, PhasePoint};
use crate::stats::KahanSum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("no samples")]
    NoSamples,
    #[error("samples must have at least one ambient coordinate")]
    ZeroDimension,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sample {index} has a non-finite coordinate")]
    NonFiniteSample { index: usize },
    #[error("no kernel centers")]
    NoCenters,
    #[error("duplicate kernel center at phase {0}")]
    DuplicateCenter(f64),
    #[error("kernel width parameter beta must be finite and positive, got {0}")]
    InvalidBeta(f64),
    #[error("ridge parameter lambda must be finite and nonnegative, got {0}")]
    InvalidLambda(f64),
    #[error(
        "kernel least-squares system is numerically singular (condition estimate {condition:.3e}); \
         retry with lambda >= {suggested_lambda:.1e}"
    )]
    SingularSystem {
        condition: f64,
        suggested_lambda: f64,
    },
    #[error("partition cell {cell} has zero measure")]
    ZeroMeasureCell { cell: usize },
    #[error("need at least {needed} levels, got {got}")]
    TooFewLevels { needed: usize, got: usize },
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
}

pub type Result<T> = std::result::Result<T, EstimateError>;

/// One observation `(s, x) ∈ S¹ × ℝ^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub s: PhasePoint,
    pub x: Vec<f64>,
}

impl Sample {
    pub fn new(s: PhasePoint, x: Vec<f64>) -> Self {
        Sample { s, x }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// Checks that a dataset is nonempty, shares one dimension `d ≥ 1`, and is
/// finite. Returns `d`.
pub fn validate_samples(samples: &[Sample]) -> Result<usize> {
    let first = samples.first().ok_or(EstimateError::NoSamples)?;
    let d = first.dim();
    if d == 0 {
        return Err(EstimateError::ZeroDimension);
    }
    for (index, sample) in samples.iter().enumerate() {
        if sample.dim() != d {
            return Err(EstimateError::DimensionMismatch {
                expected: d,
                got: sample.dim(),
            });
        }
        if sample.x.iter().any(|v| !v.is_finite()) {
            return Err(EstimateError::NonFiniteSample { index });
        }
    }
    Ok(d)
}

/// A total, deterministic map `S¹ → ℝ^d`.
pub trait Curve: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes `γ(s)` into `out`, which has length [`Curve::dim`].
    fn eval_into(&self, s: PhasePoint, out: &mut [f64]);

    fn eval(&self, s: PhasePoint) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(s, &mut out);
        out
    }
}

impl<C: Curve + ?Sized> Curve for &C {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval_into(&self, s: PhasePoint, out: &mut [f64]) {
        (**self).eval_into(s, out)
    }
}

impl<C: Curve + ?Sized> Curve for Box<C> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval_into(&self, s: PhasePoint, out: &mut [f64]) {
        (**self).eval_into(s, out)
    }
}

impl<C: Curve + ?Sized> Curve for std::sync::Arc<C> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval_into(&self, s: PhasePoint, out: &mut [f64]) {
        (**self).eval_into(s, out)
    }
}

/// Adapts a closure into a [`Curve`].
pub struct FnCurve<F> {
    dim: usize,
    f: F,
}

impl<F> FnCurve<F>
where
    F: Fn(PhasePoint, &mut [f64]) + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnCurve { dim, f }
    }
}

impl<F> Curve for FnCurve<F>
where
    F: Fn(PhasePoint, &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval_into(&self, s: PhasePoint, out: &mut [f64]) {
        (self.f)(s, out)
    }
}

/// Scalar closure as a one-dimensional curve.
pub fn scalar_curve<G>(g: G) -> impl Curve
where
    G: Fn(PhasePoint) -> f64 + Send + Sync,
{
    FnCurve::new(1, move |s, out: &mut [f64]| out[0] = g(s))
}

/// Empirical risk `(1/m) Σ ‖x_i - γ(s_i)‖²`.
pub fn empirical_risk(curve: &dyn Curve, samples: &[Sample]) -> Result<f64> {
    let d = validate_samples(samples)?;
    if curve.dim() != d {
        return Err(EstimateError::DimensionMismatch {
            expected: d,
            got: curve.dim(),
        });
    }
    let mut buf = vec![0.0; d];
    let mut acc = KahanSum::default();
    for sample in samples {
        curve.eval_into(sample.s, &mut buf);
        let r: f64 = sample
            .x
            .iter()
            .zip(&buf)
            .map(|(x, g)| (x - g) * (x - g))
            .sum();
        acc.add(r);
    }
    Ok(acc.value() / samples.len() as f64)
}

/// Per-cell sample counts of a dataset on a partition.
pub fn cell_counts(samples: &[Sample], partition: &Partition) -> Vec<usize> {
    let mut counts = vec![0usize; partition.num_cells()];
    for sample in samples {
        counts[partition.cell_index(sample.s)] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: f64) -> PhasePoint {
        PhasePoint::new(s).unwrap()
    }

    #[test]
    fn risk_of_single_sample() {
        let samples = vec![Sample::new(p(0.3), vec![2.0])];
        let zero = scalar_curve(|_| 0.0);
        assert_eq!(empirical_risk(&zero, &samples).unwrap(), 4.0);
    }

    #[test]
    fn risk_is_zero_on_noiseless_data() {
        let g = scalar_curve(|s| (6.0 * s.value()).sin());
        let samples: Vec<Sample> = (0..50)
            .map(|i| {
                let s = p(i as f64 / 50.0);
                Sample::new(s, g.eval(s))
            })
            .collect();
        assert_eq!(empirical_risk(&g, &samples).unwrap(), 0.0);
    }

    #[test]
    fn risk_matches_direct_sum() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<Sample> = (0..100)
            .map(|_| {
                Sample::new(
                    p(rng.random()),
                    vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
                )
            })
            .collect();
        let curve = FnCurve::new(2, |s: PhasePoint, out: &mut [f64]| {
            out[0] = s.value();
            out[1] = 1.0 - s.value() * s.value();
        });
        let mut naive = 0.0;
        for smp in &samples {
            let s = smp.s.value();
            naive += (smp.x[0] - s).powi(2) + (smp.x[1] - (1.0 - s * s)).powi(2);
        }
        naive /= 100.0;
        let risk = empirical_risk(&curve, &samples).unwrap();
        assert!((risk - naive).abs() < 1e-12);
    }

    #[test]
    fn risk_rejects_bad_inputs() {
        let g = scalar_curve(|_| 0.0);
        assert_eq!(empirical_risk(&g, &[]), Err(EstimateError::NoSamples));
        let two_d = vec![Sample::new(p(0.1), vec![1.0, 2.0])];
        assert_eq!(
            empirical_risk(&g, &two_d),
            Err(EstimateError::DimensionMismatch {
                expected: 2,
                got: 1
            })
        );
        let mixed = vec![
            Sample::new(p(0.1), vec![1.0]),
            Sample::new(p(0.2), vec![1.0, 2.0]),
        ];
        assert!(validate_samples(&mixed).is_err());
        let nan = vec![Sample::new(p(0.1), vec![f64::NAN])];
        assert_eq!(
            validate_samples(&nan),
            Err(EstimateError::NonFiniteSample { index: 0 })
        );
    }
}
