//! Monte-Carlo studies of the estimators on synthetic curves.
//!
//! * [`run_rate_study`] measures the partition estimator's `L²_μ` error over
//!   a grid of levels and sample counts and fits the two-term bound
//!   `C₁ N^{-r} + C₂ N ln N / m` to it.
//! * [`run_center_sweep`] fits both estimators at matching resolution.
//! * [`run_beta_sweep`] follows a fixed kernel basis across widths.
//! * [`compare_curves`] tabulates the pointwise gap between two fits.
//!
//! The [`report`] module turns results into CSV, JSON and SVG files.

mod config;
pub mod plot;
mod rate;
pub mod report;
mod sweeps;

use std::path::PathBuf;

use thiserror::Error;

use crate::estimators::EstimateError;
use crate::manifold::ManifoldError;
use crate::synth::SynthError;

pub use config::{ExperimentConfig, MeasureSpec};
pub use rate::{
    aggregate_cell, fit_bound, resolve_rate, run_rate_study, trial_seed, BoundFit,
    ErrorStatistic, RateCell, RateReport, RateSource, SlopeFit, TrialOutcome,
};
pub use report::{Provenance, ReportFormat};
pub use sweeps::{
    beta_sweep_on, center_sweep_on, compare_curves, equispaced_centers, evaluation_grid,
    run_beta_sweep, run_center_sweep, total_variation, BetaSweep, BetaSweepRow, CenterSweep,
    CenterSweepRow, Comparison, ComparisonPoint, Overlay, DENSE_GRID, OVERLAY_GRID,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("experiment grid `{0}` is empty")]
    EmptyGrid(&'static str),
    #[error("invalid experiment parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl From<ManifoldError> for ExperimentError {
    fn from(e: ManifoldError) -> Self {
        ExperimentError::Estimate(EstimateError::Manifold(e))
    }
}

pub type Result<T> = std::result::Result<T, ExperimentError>;
