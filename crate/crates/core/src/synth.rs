//! Synthetic ground truth: analytic closed curves with known approximation
//! behaviour, sampling measures on S¹, and additive mean-zero noise.
//!
//! Because the noise has conditional mean zero, the regressor of the
//! generated measure is the curve itself, so estimator errors can be
//! measured against an exact target.
//!
//! Random streams: every dataset is drawn from `ChaCha8Rng::seed_from_u64(seed)`.
//! Phases use stream 0 and the noise of ambient coordinate `j` uses stream
//! `j + 1`, so adding a coordinate never perturbs the phases or the other
//! coordinates.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{Curve, Sample};
use crate::manifold::{geodesic_distance, MeasureOnS, PhasePoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("curve dimension must be at least 1")]
    ZeroDimension,
    #[error("fourier coordinate {coord}: cos and sin tables have different lengths")]
    RaggedFourier { coord: usize },
    #[error("step curve needs at least one breakpoint")]
    NoBreakpoints,
    #[error("step breakpoints must be strictly increasing in [0, 1)")]
    UnsortedBreakpoints,
    #[error("step curve has {breakpoints} breakpoints but {values} value rows")]
    StepShape { breakpoints: usize, values: usize },
    #[error("curve parameter is not finite")]
    NonFinite,
    #[error("noise sigma must be finite and nonnegative, got {0}")]
    InvalidSigma(f64),
}

/// `mean + Σ_k cos[k-1]·cos(2πks) + sin[k-1]·sin(2πks)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierSeries {
    #[serde(default)]
    pub mean: f64,
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl FourierSeries {
    fn eval(&self, s: f64) -> f64 {
        let mut v = self.mean;
        for (k, (a, b)) in self.cos.iter().zip(&self.sin).enumerate() {
            let (sn, cs) = (TAU * (k + 1) as f64 * s).sin_cos();
            v += a * cs + b * sn;
        }
        v
    }

    fn is_constant(&self) -> bool {
        self.cos.iter().chain(&self.sin).all(|&c| c == 0.0)
    }
}

/// Closed analytic curve `S¹ → ℝ^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AnalyticCurve {
    /// Trigonometric polynomial per coordinate (smooth).
    Fourier { coords: Vec<FourierSeries> },
    /// Triangle wave: coordinate `j` is `slope · d(s, j/dim)` with the
    /// geodesic distance `d`, Lipschitz with constant `slope`.
    LipschitzSawtooth { slope: f64, dim: usize },
    /// Piecewise constant: row `i` of `values` holds on
    /// `[breakpoints[i], breakpoints[i+1])`, the last row wrapping to the
    /// first breakpoint.
    Step {
        breakpoints: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

impl AnalyticCurve {
    /// The zero curve in `ℝ^dim`.
    pub fn zero(dim: usize) -> Self {
        AnalyticCurve::Fourier {
            coords: vec![FourierSeries::default(); dim],
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        match self {
            AnalyticCurve::Fourier { coords } => {
                if coords.is_empty() {
                    return Err(SynthError::ZeroDimension);
                }
                for (coord, c) in coords.iter().enumerate() {
                    if c.cos.len() != c.sin.len() {
                        return Err(SynthError::RaggedFourier { coord });
                    }
                    if !c.mean.is_finite() || c.cos.iter().chain(&c.sin).any(|v| !v.is_finite()) {
                        return Err(SynthError::NonFinite);
                    }
                }
            }
            AnalyticCurve::LipschitzSawtooth { slope, dim } => {
                if *dim == 0 {
                    return Err(SynthError::ZeroDimension);
                }
                if !slope.is_finite() {
                    return Err(SynthError::NonFinite);
                }
            }
            AnalyticCurve::Step {
                breakpoints,
                values,
            } => {
                if breakpoints.is_empty() {
                    return Err(SynthError::NoBreakpoints);
                }
                if breakpoints.len() != values.len() {
                    return Err(SynthError::StepShape {
                        breakpoints: breakpoints.len(),
                        values: values.len(),
                    });
                }
                let in_range = breakpoints.iter().all(|b| (0.0..1.0).contains(b));
                if !in_range || breakpoints.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(SynthError::UnsortedBreakpoints);
                }
                let d = values[0].len();
                if d == 0 {
                    return Err(SynthError::ZeroDimension);
                }
                if values.iter().any(|row| row.len() != d) {
                    return Err(SynthError::StepShape {
                        breakpoints: breakpoints.len(),
                        values: values.len(),
                    });
                }
                if values.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(SynthError::NonFinite);
                }
            }
        }
        Ok(())
    }

    /// Number of discontinuities on the circle (zero except for steps).
    pub fn jump_count(&self) -> usize {
        match self {
            AnalyticCurve::Step { values, .. } => {
                let n = values.len();
                (0..n).filter(|&i| values[i] != values[(i + n - 1) % n]).count()
            }
            _ => 0,
        }
    }

    /// Generic linear approximation rate by piecewise constants:
    /// 1 for Lipschitz curves (piecewise constants saturate at first order),
    /// 1/2 for curves with jumps, `None` for constant curves.
    pub fn nominal_rate(&self) -> Option<f64> {
        match self {
            AnalyticCurve::Fourier { coords } => {
                if coords.iter().all(FourierSeries::is_constant) {
                    None
                } else {
                    Some(1.0)
                }
            }
            AnalyticCurve::LipschitzSawtooth { slope, .. } => (*slope != 0.0).then_some(1.0),
            AnalyticCurve::Step { .. } => (self.jump_count() > 0).then_some(0.5),
        }
    }
}

impl Curve for AnalyticCurve {
    fn dim(&self) -> usize {
        match self {
            AnalyticCurve::Fourier { coords } => coords.len(),
            AnalyticCurve::LipschitzSawtooth { dim, .. } => *dim,
            AnalyticCurve::Step { values, .. } => values[0].len(),
        }
    }

    fn eval_into(&self, s: PhasePoint, out: &mut [f64]) {
        match self {
            AnalyticCurve::Fourier { coords } => {
                for (o, c) in out.iter_mut().zip(coords) {
                    *o = c.eval(s.value());
                }
            }
            AnalyticCurve::LipschitzSawtooth { slope, dim } => {
                for (j, o) in out.iter_mut().enumerate() {
                    let anchor = PhasePoint::new(j as f64 / *dim as f64).expect("finite");
                    *o = slope * geodesic_distance(s, anchor);
                }
            }
            AnalyticCurve::Step {
                breakpoints,
                values,
            } => {
                let idx = breakpoints.partition_point(|&b| b <= s.value());
                let row = if idx == 0 { values.len() - 1 } else { idx - 1 };
                out.copy_from_slice(&values[row]);
            }
        }
    }
}

/// Conditional law of `x` given `s`, as an offset from the curve value.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseModel {
    #[default]
    None,
    /// Independent `N(0, σ²)` on every coordinate.
    GaussianIsotropic { sigma: f64 },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), SynthError> {
        match *self {
            NoiseModel::GaussianIsotropic { sigma } if !(sigma.is_finite() && sigma >= 0.0) => {
                Err(SynthError::InvalidSigma(sigma))
            }
            _ => Ok(()),
        }
    }

    pub fn sigma(&self) -> f64 {
        match *self {
            NoiseModel::None => 0.0,
            NoiseModel::GaussianIsotropic { sigma } => sigma,
        }
    }
}

/// Draws one phase from `measure`.
pub fn sample_phase<R: Rng + ?Sized>(measure: &MeasureOnS, rng: &mut R) -> PhasePoint {
    match measure {
        MeasureOnS::Uniform => PhasePoint::new(rng.random::<f64>()).expect("finite"),
        MeasureOnS::VonMises { mean, kappa } => {
            let angle = sample_von_mises_angle(*kappa, rng);
            PhasePoint::new(mean.value() + angle / TAU).expect("finite")
        }
        MeasureOnS::Empirical(points) => points[rng.random_range(0..points.len())],
    }
}

/// Best–Fisher rejection sampler for the von Mises angle around 0.
fn sample_von_mises_angle<R: Rng + ?Sized>(kappa: f64, rng: &mut R) -> f64 {
    if kappa < 1e-8 {
        return TAU * rng.random::<f64>() - PI;
    }
    let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
    let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
    let r = (1.0 + rho * rho) / (2.0 * rho);
    loop {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let u3: f64 = rng.random();
        let z = (PI * u1).cos();
        let f = (1.0 + r * z) / (r + z);
        let c = kappa * (r - f);
        if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
            let theta = f.clamp(-1.0, 1.0).acos();
            return if u3 > 0.5 { theta } else { -theta };
        }
    }
}

/// `m` i.i.d. samples `s_i ~ measure`, `x_i = curve(s_i) + noise`.
pub fn sample_dataset(
    curve: &AnalyticCurve,
    measure: &MeasureOnS,
    noise: &NoiseModel,
    m: usize,
    seed: u64,
) -> Vec<Sample> {
    let mut samples = Vec::with_capacity(m);
    for_each_sample(curve, measure, noise, m, seed, |s, x| {
        samples.push(Sample::new(s, x.to_vec()))
    });
    samples
}

/// Streams the same observations as [`sample_dataset`], in the same order,
/// without materializing them.
pub fn for_each_sample<F>(
    curve: &AnalyticCurve,
    measure: &MeasureOnS,
    noise: &NoiseModel,
    m: usize,
    seed: u64,
    mut f: F,
) where
    F: FnMut(PhasePoint, &[f64]),
{
    let d = curve.dim();
    let mut phase_rng = ChaCha8Rng::seed_from_u64(seed);
    phase_rng.set_stream(0);
    let sigma = noise.sigma();
    let mut noise_rngs: Vec<ChaCha8Rng> = if sigma > 0.0 {
        (0..d)
            .map(|j| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(j as u64 + 1);
                rng
            })
            .collect()
    } else {
        Vec::new()
    };
    let mut buf = vec![0.0; d];
    for _ in 0..m {
        let s = sample_phase(measure, &mut phase_rng);
        curve.eval_into(s, &mut buf);
        for (x, rng) in buf.iter_mut().zip(noise_rngs.iter_mut()) {
            let z: f64 = rng.sample(StandardNormal);
            *x += sigma * z;
        }
        f(s, &buf);
    }
}

/// The regressor `E[x | s]` of the synthetic measure: the curve itself,
/// since both noise kinds have conditional mean zero.
pub fn regressor_of(curve: &AnalyticCurve, _noise: &NoiseModel) -> AnalyticCurve {
    curve.clone()
}
