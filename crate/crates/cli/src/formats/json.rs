//! JSON documents: segmentations, experiment configs and estimates.

use std::path::Path;

use phasefit::estimators::{
    Curve, EstimateError, FillRecord, KernelEstimate, KernelMetric, PartitionEstimate,
    PiecewiseConstant,
};
use phasefit::experiments::{ExperimentConfig, Provenance};
use phasefit::gait::{GaitSegmentation, Stride};
use phasefit::manifold::{Partition, PhasePoint};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Deserializes `text`, reporting the failing field path and position.
pub fn parse_json<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        let location = format!("line {}, column {}", inner.line(), inner.column());
        let message = if field.is_empty() || field == "." {
            format!("{location}: {inner}")
        } else {
            format!("{location}: at `{field}`: {inner}")
        };
        CliError::parse(path, message)
    })
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Segmentation file: a JSON array of `{"t_p": .., "T_p": ..}`.
pub fn parse_segmentation(text: &str, path: &Path) -> Result<GaitSegmentation> {
    let strides: Vec<Stride> = parse_json(text, path)?;
    GaitSegmentation::new(strides).map_err(|e| CliError::parse(path, e.to_string()))
}

pub fn read_segmentation(path: &Path) -> Result<GaitSegmentation> {
    parse_segmentation(&read_text(path)?, path)
}

pub fn render_segmentation(seg: &GaitSegmentation) -> String {
    to_pretty_json(&seg.strides())
}

/// Experiment config, parsed and validated.
pub fn parse_config(text: &str, path: &Path) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = parse_json(text, path)?;
    cfg.validate()
        .map_err(|e| CliError::parse(path, e.to_string()))?;
    Ok(cfg)
}

/// The parameterization and coefficients of a fitted curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EstimateBody {
    Partition {
        level: u32,
        /// One row per cell.
        coefficients: Vec<Vec<f64>>,
        #[serde(default)]
        counts: Vec<usize>,
        #[serde(default)]
        fills: Vec<FillRecord>,
    },
    Kernel {
        centers: Vec<f64>,
        beta: f64,
        lambda: f64,
        metric: KernelMetric,
        /// One row per center.
        coefficients: Vec<Vec<f64>>,
        #[serde(default)]
        condition: Option<f64>,
    },
}

/// An estimate file: body plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateFile {
    #[serde(flatten)]
    pub body: EstimateBody,
    pub provenance: Provenance,
}

impl EstimateFile {
    pub fn from_partition(est: &PartitionEstimate, provenance: Provenance) -> Self {
        EstimateFile {
            body: EstimateBody::Partition {
                level: est.partition().level(),
                coefficients: est.coeffs().to_vec(),
                counts: est.counts().to_vec(),
                fills: est.fills().to_vec(),
            },
            provenance,
        }
    }

    pub fn from_piecewise(pc: &PiecewiseConstant, provenance: Provenance) -> Self {
        EstimateFile {
            body: EstimateBody::Partition {
                level: pc.partition().level(),
                coefficients: pc.coeffs().to_vec(),
                counts: Vec::new(),
                fills: Vec::new(),
            },
            provenance,
        }
    }

    pub fn from_kernel(est: &KernelEstimate, provenance: Provenance) -> Self {
        EstimateFile {
            body: EstimateBody::Kernel {
                centers: est.centers().iter().map(|c| c.value()).collect(),
                beta: est.beta(),
                lambda: est.lambda(),
                metric: est.metric(),
                coefficients: est.coeffs().to_vec(),
                condition: est.condition(),
            },
            provenance,
        }
    }

    pub fn dim(&self) -> usize {
        let coeffs = match &self.body {
            EstimateBody::Partition { coefficients, .. } => coefficients,
            EstimateBody::Kernel { coefficients, .. } => coefficients,
        };
        coeffs.first().map_or(0, Vec::len)
    }

    /// Rebuilds the evaluable curve, validating shapes.
    pub fn to_curve(&self) -> std::result::Result<Box<dyn Curve>, EstimateError> {
        match &self.body {
            EstimateBody::Partition {
                level,
                coefficients,
                ..
            } => {
                let partition = Partition::dyadic(*level)?;
                if coefficients.len() != partition.num_cells() {
                    return Err(EstimateError::DimensionMismatch {
                        expected: partition.num_cells(),
                        got: coefficients.len(),
                    });
                }
                let d = coefficients.first().map_or(0, Vec::len);
                if d == 0 {
                    return Err(EstimateError::ZeroDimension);
                }
                if let Some(row) = coefficients.iter().find(|r| r.len() != d) {
                    return Err(EstimateError::DimensionMismatch {
                        expected: d,
                        got: row.len(),
                    });
                }
                if coefficients.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(EstimateError::NonFiniteSample { index: 0 });
                }
                Ok(Box::new(PiecewiseConstant::new(partition, coefficients.clone())))
            }
            EstimateBody::Kernel {
                centers,
                beta,
                lambda,
                metric,
                coefficients,
                ..
            } => {
                let centers = centers
                    .iter()
                    .map(|&c| PhasePoint::new(c))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                Ok(Box::new(KernelEstimate::from_parts(
                    centers,
                    *beta,
                    *lambda,
                    *metric,
                    coefficients.clone(),
                )?))
            }
        }
    }

    pub fn render(&self) -> String {
        to_pretty_json(self)
    }
}

pub fn parse_estimate(text: &str, path: &Path) -> Result<EstimateFile> {
    let file: EstimateFile = parse_json(text, path)?;
    file.to_curve()
        .map_err(|e| CliError::parse(path, e.to_string()))?;
    Ok(file)
}

pub fn read_estimate(path: &Path) -> Result<EstimateFile> {
    parse_estimate(&read_text(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use phasefit::estimators::{fit_kernel, fit_partition, Sample};
    use phasefit::experiments::evaluation_grid;
    use phasefit::manifold::make_partition;

    fn p(s: f64) -> PhasePoint {
        PhasePoint::new(s).unwrap()
    }

    fn samples() -> Vec<Sample> {
        (0..40)
            .map(|i| {
                let s = (i as f64 * 0.618_033_988_749_895) % 1.0;
                Sample::new(p(s), vec![(6.0 * s).sin() / 3.0, s * s, 1.0 / 7.0 + s])
            })
            .collect()
    }

    #[test]
    fn segmentation_round_trip_and_validation() {
        let path = Path::new("seg.json");
        let seg = parse_segmentation(r#"[{"t_p": 1.0, "T_p": 0.5}, {"t_p": 1.5, "T_p": 0.25}]"#, path)
            .unwrap();
        assert_eq!(seg.strides().len(), 2);
        let again = parse_segmentation(&render_segmentation(&seg), path).unwrap();
        assert_eq!(again, seg);
        let err = parse_segmentation(r#"[{"t_p": 1.0, "T_p": -0.5}]"#, path).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = parse_segmentation(r#"[{"t_p": 1.0, "period": 0.5}]"#, path).unwrap_err();
        assert!(err.to_string().contains("[0]"), "{err}");
        let overlap = r#"[{"t_p": 0.0, "T_p": 1.0}, {"t_p": 0.5, "T_p": 1.0}]"#;
        assert!(parse_segmentation(overlap, path).is_err());
    }

    #[test]
    fn config_errors_carry_schema_path() {
        let err = parse_config(
            r#"{"curve": {"kind": "step", "breakpoints": [0.5], "values": [[1.0]]},
                "levels": [1, "two"], "sample_counts": [10]}"#,
            Path::new("cfg.json"),
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("levels[1]") && msg.contains("line 2"), "{msg}");
        let err = parse_config(
            r#"{"curve": {"kind": "step", "breakpoints": [0.5], "values": [[1.0]]},
                "levels": [], "sample_counts": [10]}"#,
            Path::new("cfg.json"),
        )
        .unwrap_err();
        assert!(err.to_string().contains("levels"));
    }

    #[test]
    fn partition_estimate_round_trips_exactly() {
        let est = fit_partition(&samples(), &make_partition(4).unwrap()).unwrap();
        let file = EstimateFile::from_partition(&est, Provenance::new("fit").with_seed(3));
        let back = parse_estimate(&file.render(), Path::new("e.json")).unwrap();
        assert_eq!(back, file);
        let (a, b) = (file.to_curve().unwrap(), back.to_curve().unwrap());
        for s in evaluation_grid(1000) {
            for (x, y) in a.eval(s).iter().zip(b.eval(s)) {
                assert!((x - y).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn kernel_estimate_round_trips_exactly() {
        let centers: Vec<PhasePoint> = (0..8).map(|k| p((k as f64 + 0.5) / 8.0)).collect();
        let est = fit_kernel(&samples(), &centers, 25.0, 1e-6, KernelMetric::Geodesic).unwrap();
        let file = EstimateFile::from_kernel(&est, Provenance::new("fit"));
        let back = parse_estimate(&file.render(), Path::new("e.json")).unwrap();
        assert_eq!(back, file);
        for s in evaluation_grid(1000) {
            let (x, y) = (est.eval(s), back.to_curve().unwrap().eval(s));
            for (a, b) in x.iter().zip(&y) {
                assert!((a - b).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn malformed_estimates_are_rejected() {
        let path = Path::new("e.json");
        let prov = r#""provenance": {"tool": "phasefit", "version": "0", "command": "fit"}"#;
        let wrong_rows = format!(r#"{{"kind": "partition", "level": 1, "coefficients": [[1.0]], {prov}}}"#);
        assert!(parse_estimate(&wrong_rows, path).is_err());
        let unknown = format!(r#"{{"kind": "spline", "coefficients": [[1.0]], {prov}}}"#);
        assert!(parse_estimate(&unknown, path).is_err());
    }
}
