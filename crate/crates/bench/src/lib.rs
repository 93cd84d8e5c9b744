//! Shared inputs for the benchmarks.

use phasefit::estimators::Sample;
use phasefit::experiments::MeasureSpec;
use phasefit::synth::{sample_dataset, AnalyticCurve, FourierSeries, NoiseModel};

/// A smooth three-dimensional test curve.
pub fn curve() -> AnalyticCurve {
    AnalyticCurve::Fourier {
        coords: vec![
            FourierSeries { mean: 0.0, cos: vec![0.3, 0.0], sin: vec![0.0, 0.1] },
            FourierSeries { mean: 0.1, cos: vec![0.0, 0.12], sin: vec![0.25, 0.0] },
            FourierSeries { mean: 0.9, cos: vec![0.05, 0.0], sin: vec![0.02, 0.01] },
        ],
    }
}

/// `m` noisy samples of [`curve`] under the uniform phase measure.
pub fn dataset(m: usize, seed: u64) -> Vec<Sample> {
    let measure = MeasureSpec::Uniform.build().expect("uniform measure");
    sample_dataset(
        &curve(),
        &measure,
        &NoiseModel::GaussianIsotropic { sigma: 0.1 },
        m,
        seed,
    )
}
