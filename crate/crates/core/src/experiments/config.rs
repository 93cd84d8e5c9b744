use serde::{Deserialize, Serialize};

use crate::estimators::KernelMetric;
use crate::manifold::{MeasureOnS, Partition, PhasePoint, Quadrature};
use crate::synth::{AnalyticCurve, NoiseModel};

use super::{ExperimentError, Result};

/// Serializable description of the phase sampling law.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeasureSpec {
    #[default]
    Uniform,
    VonMises {
        mean: f64,
        kappa: f64,
    },
    Empirical {
        phases: Vec<f64>,
    },
}

impl MeasureSpec {
    pub fn build(&self) -> Result<MeasureOnS> {
        Ok(match self {
            MeasureSpec::Uniform => MeasureOnS::Uniform,
            MeasureSpec::VonMises { mean, kappa } => {
                MeasureOnS::von_mises(PhasePoint::new(*mean)?, *kappa)?
            }
            MeasureSpec::Empirical { phases } => MeasureOnS::empirical(
                phases
                    .iter()
                    .map(|&s| PhasePoint::new(s))
                    .collect::<std::result::Result<_, _>>()?,
            )?,
        })
    }
}

fn default_trials() -> usize {
    50
}

fn default_betas() -> Vec<f64> {
    vec![400.0, 100.0, 25.0, 6.0]
}

fn default_centers() -> usize {
    16
}

/// One experiment: the synthetic truth, the grids to sweep, and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub curve: AnalyticCurve,
    #[serde(default)]
    pub measure: MeasureSpec,
    #[serde(default)]
    pub noise: NoiseModel,
    /// Partition levels `n`; the partition has `2^n` cells.
    pub levels: Vec<u32>,
    /// Sample counts `m`.
    pub sample_counts: Vec<usize>,
    #[serde(default = "default_betas")]
    pub betas: Vec<f64>,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Midpoint-rule resolution for `L²_μ` integrals. Defaults to
    /// [`Quadrature::default_resolution`] at the finest level.
    #[serde(default)]
    pub quadrature: Option<usize>,
    /// Approximation rate `r` of the curve. Defaults to the curve kind's
    /// nominal rate, then to a fit over the level grid.
    #[serde(default)]
    pub rate: Option<f64>,
    /// Kernel center count for the β sweep.
    #[serde(default = "default_centers")]
    pub centers: usize,
    #[serde(default)]
    pub metric: KernelMetric,
}

impl ExperimentConfig {
    /// A config with defaults for everything but the curve and grids.
    pub fn new(curve: AnalyticCurve, levels: Vec<u32>, sample_counts: Vec<usize>) -> Self {
        ExperimentConfig {
            curve,
            measure: MeasureSpec::Uniform,
            noise: NoiseModel::None,
            levels,
            sample_counts,
            betas: default_betas(),
            lambda: 0.0,
            trials: default_trials(),
            seed: 0,
            quadrature: None,
            rate: None,
            centers: default_centers(),
            metric: KernelMetric::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.curve.validate()?;
        self.noise.validate()?;
        self.measure.build()?;
        if self.levels.is_empty() {
            return Err(ExperimentError::EmptyGrid("levels"));
        }
        if self.sample_counts.is_empty() {
            return Err(ExperimentError::EmptyGrid("sample_counts"));
        }
        if self.betas.is_empty() {
            return Err(ExperimentError::EmptyGrid("betas"));
        }
        if let Some(&level) = self.levels.iter().find(|&&l| l > Partition::MAX_LEVEL) {
            return Err(ExperimentError::InvalidParameter(format!(
                "level {level} exceeds the maximum {}",
                Partition::MAX_LEVEL
            )));
        }
        if self.sample_counts.contains(&0) {
            return Err(ExperimentError::InvalidParameter(
                "sample counts must be positive".into(),
            ));
        }
        if let Some(b) = self.betas.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return Err(ExperimentError::InvalidParameter(format!(
                "beta must be finite and positive, got {b}"
            )));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(ExperimentError::InvalidParameter(format!(
                "lambda must be finite and nonnegative, got {}",
                self.lambda
            )));
        }
        if self.trials == 0 {
            return Err(ExperimentError::InvalidParameter(
                "trials must be at least 1".into(),
            ));
        }
        if self.centers == 0 {
            return Err(ExperimentError::InvalidParameter(
                "centers must be at least 1".into(),
            ));
        }
        if let Some(q) = self.quadrature {
            if q < 2 {
                return Err(ExperimentError::InvalidParameter(format!(
                    "quadrature resolution must be at least 2, got {q}"
                )));
            }
        }
        if let Some(r) = self.rate {
            if !(r.is_finite() && r > 0.0) {
                return Err(ExperimentError::InvalidParameter(format!(
                    "rate must be finite and positive, got {r}"
                )));
            }
        }
        Ok(())
    }

    pub fn max_level(&self) -> u32 {
        self.levels.iter().copied().max().unwrap_or(0)
    }

    pub fn quadrature(&self) -> Result<Quadrature> {
        let resolution = self
            .quadrature
            .unwrap_or_else(|| Quadrature::default_resolution(self.max_level()));
        Ok(Quadrature::midpoint(resolution)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sawtooth() -> AnalyticCurve {
        AnalyticCurve::LipschitzSawtooth { slope: 1.0, dim: 1 }
    }

    #[test]
    fn defaults_fill_in() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"curve": {"kind": "lipschitz-sawtooth", "slope": 1.0, "dim": 1},
                "levels": [2, 3], "sample_counts": [100]}"#,
        )
        .unwrap();
        assert_eq!(cfg.trials, 50);
        assert_eq!(cfg.centers, 16);
        assert_eq!(cfg.measure, MeasureSpec::Uniform);
        assert_eq!(cfg.noise, NoiseModel::None);
        cfg.validate().unwrap();
    }

    #[test]
    fn empty_grids_are_refused() {
        let cfg = ExperimentConfig::new(sawtooth(), vec![], vec![10]);
        assert!(matches!(cfg.validate(), Err(ExperimentError::EmptyGrid("levels"))));
        let cfg = ExperimentConfig::new(sawtooth(), vec![1], vec![]);
        assert!(matches!(
            cfg.validate(),
            Err(ExperimentError::EmptyGrid("sample_counts"))
        ));
        let mut cfg = ExperimentConfig::new(sawtooth(), vec![1], vec![10]);
        cfg.trials = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = serde_json::from_str::<ExperimentConfig>(
            r#"{"curve": {"kind": "lipschitz-sawtooth", "slope": 1.0, "dim": 1},
                "levels": [2], "sample_counts": [100], "trails": 3}"#,
        );
        assert!(err.is_err());
    }

    #[test]
    fn measure_specs_build() {
        let vm = MeasureSpec::VonMises {
            mean: 0.25,
            kappa: 2.0,
        };
        assert!(matches!(vm.build().unwrap(), MeasureOnS::VonMises { .. }));
        let bad = MeasureSpec::VonMises {
            mean: 0.25,
            kappa: -1.0,
        };
        assert!(bad.build().is_err());
        let emp = MeasureSpec::Empirical { phases: vec![] };
        assert!(emp.build().is_err());
    }
}
