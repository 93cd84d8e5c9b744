//! Estimation of a closed motion curve from samples indexed by gait phase.
//!
//! A periodic motion is modelled as a curve `γ: S¹ → ℝ^d`, where the circle
//! `S¹` is the gait phase in `[0, 1)`. From samples `(s_i, x_i)` the crate
//! computes least-squares estimates of `γ` in two approximant spaces:
//!
//! * piecewise constants on nested dyadic partitions of the circle
//!   ([`estimators::fit_partition`]), whose coefficients are per-cell sample
//!   means;
//! * spans of exponential kernels centered on chosen phases
//!   ([`estimators::fit_kernel`]).
//!
//! Supporting modules provide circle geometry and quadrature
//! ([`manifold`]), analytic ground-truth curves and seeded sampling
//! ([`synth`]), conversion of timestamped trajectories to phase samples
//! ([`gait`]), and a Monte-Carlo harness that measures how the partition
//! estimator's error scales with the number of cells and samples
//! ([`experiments`]).

pub mod estimators;
pub mod experiments;
pub mod gait;
pub mod manifold;
pub mod stats;
pub mod synth;

pub use estimators::{
    empirical_risk, fit_kernel, fit_partition, Curve, EstimateError, KernelEstimate,
    KernelMetric, PartitionEstimate, Sample,
};
pub use manifold::{MeasureOnS, Partition, PhasePoint, Quadrature};
pub use synth::{AnalyticCurve, NoiseModel};
