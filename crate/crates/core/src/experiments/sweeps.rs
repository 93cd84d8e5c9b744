use serde::{Deserialize, Serialize};

use crate::estimators::{
    empirical_risk, fit_kernel, fit_partition, gram_condition, l2_error, project_curve, Curve,
    EstimateError, Sample,
};
use crate::manifold::{Partition, PhasePoint};
use crate::synth::{regressor_of, sample_dataset};

use super::{ExperimentConfig, ExperimentError, Result};

/// Resolution of the grids used for sup-norm gaps and total variation.
pub const DENSE_GRID: usize = 4096;

/// Resolution of the stored overlay curves.
pub const OVERLAY_GRID: usize = 256;

/// Cell midpoints `(i + 1/2)/n`, which never sit on a dyadic cell boundary.
pub fn evaluation_grid(n: usize) -> Vec<PhasePoint> {
    (0..n)
        .map(|i| PhasePoint::new((i as f64 + 0.5) / n as f64).expect("in [0, 1)"))
        .collect()
}

/// `n` equispaced phases `(k + 1/2)/n`.
pub fn equispaced_centers(n: usize) -> Vec<PhasePoint> {
    evaluation_grid(n)
}

fn sup_gap(a: &dyn Curve, b: &dyn Curve, grid: &[PhasePoint]) -> f64 {
    grid.iter()
        .map(|&s| euclidean_gap(&a.eval(s), &b.eval(s)))
        .fold(0.0, f64::max)
}

fn euclidean_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Discrete total variation `Σ_i Σ_j |f_j(s_{i+1}) - f_j(s_i)|` around the
/// closed grid.
pub fn total_variation(curve: &dyn Curve, grid: &[PhasePoint]) -> f64 {
    let values: Vec<Vec<f64>> = grid.iter().map(|&s| curve.eval(s)).collect();
    let n = values.len();
    (0..n)
        .map(|i| {
            values[(i + 1) % n]
                .iter()
                .zip(&values[i])
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
        })
        .sum()
}

/// Curve values along [`OVERLAY_GRID`] phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    pub phases: Vec<f64>,
    /// One row per phase.
    pub values: Vec<Vec<f64>>,
}

impl Overlay {
    pub fn of(curve: &dyn Curve) -> Self {
        let grid = evaluation_grid(OVERLAY_GRID);
        Overlay {
            phases: grid.iter().map(|s| s.value()).collect(),
            values: grid.iter().map(|&s| curve.eval(s)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterSweepRow {
    pub level: u32,
    pub cells: usize,
    pub partition_risk: f64,
    pub partition_l2_err: Option<f64>,
    /// `‖(I - Π_n) γ‖` in `L²_μ`.
    pub partition_bias: Option<f64>,
    /// `sup |γ - Π_n γ|` over the dense grid.
    pub partition_sup_bias: Option<f64>,
    pub empty_cells: usize,
    pub kernel_risk: Option<f64>,
    pub kernel_l2_err: Option<f64>,
    pub kernel_condition: Option<f64>,
    /// `sup ‖partition fit - kernel fit‖` over the dense grid.
    pub sup_gap: Option<f64>,
    pub kernel_error: Option<String>,
    pub counts: Vec<usize>,
    pub partition_overlay: Overlay,
    pub kernel_overlay: Option<Overlay>,
}

/// Partition and kernel fits at matching resolution on one dataset, with
/// kernel centers at the cell midpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterSweep {
    pub m: usize,
    pub beta: f64,
    pub lambda: f64,
    pub truth_overlay: Option<Overlay>,
    pub rows: Vec<CenterSweepRow>,
}

/// Synthetic center sweep: draws one dataset of the largest configured `m`
/// and fits it at every level with the first configured β.
pub fn run_center_sweep(cfg: &ExperimentConfig) -> Result<CenterSweep> {
    cfg.validate()?;
    let measure = cfg.measure.build()?;
    let m = *cfg.sample_counts.iter().max().expect("validated nonempty");
    let samples = sample_dataset(&cfg.curve, &measure, &cfg.noise, m, cfg.seed);
    let truth = regressor_of(&cfg.curve, &cfg.noise);
    center_sweep_on(cfg, &samples, Some(&truth))
}

/// Center sweep on a given dataset; `truth` enables the `L²_μ` columns.
pub fn center_sweep_on(
    cfg: &ExperimentConfig,
    samples: &[Sample],
    truth: Option<&dyn Curve>,
) -> Result<CenterSweep> {
    cfg.validate()?;
    let measure = cfg.measure.build()?;
    let quad = cfg.quadrature()?;
    let beta = cfg.betas[0];
    let dense = evaluation_grid(DENSE_GRID);
    let mut rows = Vec::with_capacity(cfg.levels.len());
    for &level in &cfg.levels {
        let partition = Partition::dyadic(level)?;
        let part = fit_partition(samples, &partition)?;
        let partition_risk = empirical_risk(&part, samples)?;
        let (partition_l2_err, partition_bias, partition_sup_bias) = match truth {
            Some(g) => {
                let proj = project_curve(g, &partition, &measure, &quad)?;
                (
                    Some(l2_error(g, &part, &measure, &quad)?),
                    Some(l2_error(g, &proj, &measure, &quad)?),
                    Some(sup_gap(g, &proj, &dense)),
                )
            }
            None => (None, None, None),
        };

        let kernel = fit_kernel(
            samples,
            partition.representatives(),
            beta,
            cfg.lambda,
            cfg.metric,
        );
        let (kernel_risk, kernel_l2_err, kernel_condition, gap, kernel_error, kernel_overlay) =
            match kernel {
                Ok(k) => (
                    Some(empirical_risk(&k, samples)?),
                    match truth {
                        Some(g) => Some(l2_error(g, &k, &measure, &quad)?),
                        None => None,
                    },
                    k.condition(),
                    Some(sup_gap(&part, &k, &dense)),
                    None,
                    Some(Overlay::of(&k)),
                ),
                Err(e @ EstimateError::SingularSystem { .. }) => {
                    (None, None, None, None, Some(e.to_string()), None)
                }
                Err(e) => return Err(e.into()),
            };

        rows.push(CenterSweepRow {
            level,
            cells: partition.num_cells(),
            partition_risk,
            partition_l2_err,
            partition_bias,
            partition_sup_bias,
            empty_cells: part.fills().len(),
            kernel_risk,
            kernel_l2_err,
            kernel_condition,
            sup_gap: gap,
            kernel_error,
            counts: part.counts().to_vec(),
            partition_overlay: Overlay::of(&part),
            kernel_overlay,
        });
    }
    Ok(CenterSweep {
        m: samples.len(),
        beta,
        lambda: cfg.lambda,
        truth_overlay: truth.map(Overlay::of),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSweepRow {
    pub beta: f64,
    /// 2-norm condition number of the center Gram matrix.
    pub gram_condition: f64,
    /// Condition estimate of the regularized least-squares system.
    pub system_condition: Option<f64>,
    pub risk: Option<f64>,
    pub l2_err: Option<f64>,
    pub total_variation: Option<f64>,
    pub coeff_norm: Option<f64>,
    pub error: Option<String>,
    pub suggested_lambda: Option<f64>,
    pub overlay: Option<Overlay>,
}

/// Kernel fits with a fixed set of equispaced centers across the β grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSweep {
    pub m: usize,
    pub centers: usize,
    pub lambda: f64,
    pub truth_overlay: Option<Overlay>,
    pub rows: Vec<BetaSweepRow>,
}

/// Synthetic β sweep on one dataset of the largest configured `m`.
pub fn run_beta_sweep(cfg: &ExperimentConfig) -> Result<BetaSweep> {
    cfg.validate()?;
    let measure = cfg.measure.build()?;
    let m = *cfg.sample_counts.iter().max().expect("validated nonempty");
    let samples = sample_dataset(&cfg.curve, &measure, &cfg.noise, m, cfg.seed);
    let truth = regressor_of(&cfg.curve, &cfg.noise);
    beta_sweep_on(cfg, &samples, Some(&truth))
}

/// β sweep on a given dataset. Singular solves are recorded in their row.
pub fn beta_sweep_on(
    cfg: &ExperimentConfig,
    samples: &[Sample],
    truth: Option<&dyn Curve>,
) -> Result<BetaSweep> {
    cfg.validate()?;
    let measure = cfg.measure.build()?;
    let quad = cfg.quadrature()?;
    let centers = equispaced_centers(cfg.centers);
    let dense = evaluation_grid(DENSE_GRID);
    let mut rows = Vec::with_capacity(cfg.betas.len());
    for &beta in &cfg.betas {
        let gram = gram_condition(&centers, beta, cfg.metric)?;
        let row = match fit_kernel(samples, &centers, beta, cfg.lambda, cfg.metric) {
            Ok(k) => BetaSweepRow {
                beta,
                gram_condition: gram,
                system_condition: k.condition(),
                risk: Some(empirical_risk(&k, samples)?),
                l2_err: match truth {
                    Some(g) => Some(l2_error(g, &k, &measure, &quad)?),
                    None => None,
                },
                total_variation: Some(total_variation(&k, &dense)),
                coeff_norm: Some(k.coeff_norm()),
                error: None,
                suggested_lambda: None,
                overlay: Some(Overlay::of(&k)),
            },
            Err(
                e @ EstimateError::SingularSystem {
                    condition,
                    suggested_lambda,
                },
            ) => BetaSweepRow {
                beta,
                gram_condition: gram,
                system_condition: Some(condition),
                risk: None,
                l2_err: None,
                total_variation: None,
                coeff_norm: None,
                error: Some(e.to_string()),
                suggested_lambda: Some(suggested_lambda),
                overlay: None,
            },
            Err(e) => return Err(e.into()),
        };
        rows.push(row);
    }
    Ok(BetaSweep {
        m: samples.len(),
        centers: cfg.centers,
        lambda: cfg.lambda,
        truth_overlay: truth.map(Overlay::of),
        rows,
    })
}

/// Both fits evaluated at one phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonPoint {
    pub s: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// `‖a - b‖`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub points: Vec<ComparisonPoint>,
    pub sup_gap: f64,
    /// Root mean square of the gap over the grid.
    pub rms_gap: f64,
}

/// Evaluates two curves on a midpoint grid of `grid` phases and reports
/// their pointwise gap.
pub fn compare_curves(a: &dyn Curve, b: &dyn Curve, grid: usize) -> Result<Comparison> {
    if a.dim() != b.dim() {
        return Err(ExperimentError::Estimate(EstimateError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        }));
    }
    if grid == 0 {
        return Err(ExperimentError::InvalidParameter(
            "comparison grid must have at least one point".into(),
        ));
    }
    let points: Vec<ComparisonPoint> = evaluation_grid(grid)
        .into_iter()
        .map(|s| {
            let (va, vb) = (a.eval(s), b.eval(s));
            let gap = euclidean_gap(&va, &vb);
            ComparisonPoint {
                s: s.value(),
                a: va,
                b: vb,
                gap,
            }
        })
        .collect();
    let sup_gap = points.iter().map(|p| p.gap).fold(0.0, f64::max);
    let mean_sq = crate::stats::compensated_sum(
        &points.iter().map(|p| p.gap * p.gap).collect::<Vec<_>>(),
    ) / grid as f64;
    Ok(Comparison {
        points,
        sup_gap,
        rms_gap: mean_sq.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{fit_kernel, KernelMetric};
    use crate::synth::{AnalyticCurve, FourierSeries, NoiseModel};

    fn smooth() -> AnalyticCurve {
        AnalyticCurve::Fourier {
            coords: vec![
                FourierSeries {
                    mean: 0.0,
                    cos: vec![1.0, 0.0],
                    sin: vec![0.0, 0.3],
                },
                FourierSeries {
                    mean: 1.0,
                    cos: vec![0.0],
                    sin: vec![0.5],
                },
            ],
        }
    }

    #[test]
    fn center_sweep_bias_is_monotone() {
        let mut cfg = ExperimentConfig::new(smooth(), vec![1, 2, 3, 4, 5], vec![2000]);
        cfg.noise = NoiseModel::GaussianIsotropic { sigma: 0.05 };
        cfg.betas = vec![100.0];
        cfg.lambda = 1e-8;
        let sweep = run_center_sweep(&cfg).unwrap();
        assert_eq!(sweep.rows.len(), 5);
        let biases: Vec<f64> = sweep.rows.iter().map(|r| r.partition_bias.unwrap()).collect();
        for pair in biases.windows(2) {
            assert!(pair[1] <= pair[0], "{biases:?}");
        }
        for row in &sweep.rows {
            assert_eq!(row.counts.iter().sum::<usize>(), 2000);
            assert_eq!(row.counts.len(), row.cells);
        }
    }

    #[test]
    fn center_sweep_is_deterministic() {
        let mut cfg = ExperimentConfig::new(smooth(), vec![2, 4], vec![300]);
        cfg.seed = 5;
        cfg.lambda = 1e-6;
        assert_eq!(run_center_sweep(&cfg).unwrap(), run_center_sweep(&cfg).unwrap());
    }

    #[test]
    fn fits_with_32_centers_stay_within_twice_the_partition_bias() {
        let mut cfg = ExperimentConfig::new(smooth(), vec![5], vec![4000]);
        cfg.betas = vec![60.0];
        cfg.lambda = 1e-10;
        cfg.seed = 3;
        let sweep = run_center_sweep(&cfg).unwrap();
        let row = &sweep.rows[0];
        assert_eq!(row.cells, 32);
        let gap = row.sup_gap.expect("kernel fit succeeded");
        let bias = row.partition_sup_bias.unwrap();
        assert!(gap < 2.0 * bias, "gap {gap} bias {bias}");
    }

    #[test]
    fn beta_sweep_records_every_beta() {
        let mut cfg = ExperimentConfig::new(smooth(), vec![1], vec![400]);
        cfg.betas = vec![400.0, 100.0, 25.0, 6.0, 0.5];
        cfg.seed = 11;
        let sweep = beta_sweep_on(
            &cfg,
            &sample_dataset(&cfg.curve, &cfg.measure.build().unwrap(), &cfg.noise, 400, 11),
            None,
        )
        .unwrap();
        assert_eq!(sweep.rows.len(), 5);
        for row in &sweep.rows {
            match &row.error {
                None => assert!(row.total_variation.unwrap().is_finite()),
                Some(msg) => {
                    assert!(msg.contains("lambda"));
                    assert!(row.suggested_lambda.unwrap() > 0.0);
                }
            }
        }
        // the broadest kernel is refused without regularization
        assert!(sweep.rows[4].error.is_some());
        let conds: Vec<f64> = sweep.rows[..4].iter().map(|r| r.gram_condition).collect();
        for pair in conds.windows(2) {
            assert!(pair[1] >= pair[0]);
        }
    }

    #[test]
    fn sharp_kernels_reproduce_values_at_centers() {
        let centers = equispaced_centers(16);
        let curve = smooth();
        let samples: Vec<Sample> = centers.iter().map(|&s| Sample::new(s, curve.eval(s))).collect();
        let mut cfg = ExperimentConfig::new(curve, vec![4], vec![16]);
        cfg.betas = vec![1e4];
        let sweep = beta_sweep_on(&cfg, &samples, None).unwrap();
        assert!(sweep.rows[0].error.is_none());
        let fit = fit_kernel(&samples, &centers, 1e4, 0.0, KernelMetric::Chordal).unwrap();
        for smp in &samples {
            for (a, b) in fit.eval(smp.s).iter().zip(&smp.x) {
                assert!((a - b).abs() <= 1e-3);
            }
        }
    }

    #[test]
    fn total_variation_of_known_curves() {
        let grid = evaluation_grid(DENSE_GRID);
        let constant = AnalyticCurve::zero(2);
        assert_eq!(total_variation(&constant, &grid), 0.0);
        // the sawtooth rises and falls once between its extreme grid values
        let saw = AnalyticCurve::LipschitzSawtooth { slope: 1.0, dim: 1 };
        let expected = 1.0 - 2.0 / DENSE_GRID as f64;
        assert!((total_variation(&saw, &grid) - expected).abs() < 1e-12);
    }

    #[test]
    fn comparing_a_curve_with_itself_gives_zero_gap() {
        let c = smooth();
        let cmp = compare_curves(&c, &c, 128).unwrap();
        assert_eq!(cmp.points.len(), 128);
        assert!(cmp.points.iter().all(|p| p.gap == 0.0));
        assert_eq!(cmp.sup_gap, 0.0);
        let other = AnalyticCurve::zero(1);
        assert!(compare_curves(&c, &other, 8).is_err());
    }
}
