use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimators::{project_curve, CellSums, Curve, EstimateError};
use crate::manifold::{MeasureOnS, Partition, PhasePoint, Quadrature};
use crate::stats::{fit_log_log, mean_and_se, mix_seed, KahanSum};
use crate::synth::{for_each_sample, regressor_of, AnalyticCurve};

use super::{ExperimentConfig, Result};

/// Aggregate over trials at one `(n, m)` grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateCell {
    pub level: u32,
    /// `N(n) = 2^n`.
    pub cells: usize,
    pub m: usize,
    /// Trials that produced an estimate.
    pub trials: usize,
    pub failed_trials: usize,
    pub mean_sq_err: f64,
    pub se_sq_err: f64,
    pub mean_err: f64,
    pub se_err: f64,
    /// Squared projection error `‖(I - Π_n) γ‖²`, the noiseless large-`m`
    /// limit of `mean_sq_err`.
    pub projection_sq_err: f64,
    pub mean_empty_cells: f64,
}

/// Which trial statistic a bound is fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorStatistic {
    /// Mean over trials of `‖γ - γ_{n,m}‖`.
    MeanError,
    /// Mean over trials of `‖γ - γ_{n,m}‖²`.
    MeanSquaredError,
}

impl ErrorStatistic {
    pub fn of(self, cell: &RateCell) -> f64 {
        match self {
            ErrorStatistic::MeanError => cell.mean_err,
            ErrorStatistic::MeanSquaredError => cell.mean_sq_err,
        }
    }
}

/// Where the approximation rate `r` came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateSource {
    Configured,
    /// The generic rate of the curve kind.
    Nominal,
    /// Fitted from projection errors over the level grid.
    Estimated,
}

/// A log-log line fitted along one axis of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// The grid coordinate held fixed: `m` for the bias slope, `n` for the
    /// variance slope.
    pub fixed: usize,
    pub points: usize,
}

/// `C₁ N^{-r} + C₂ N ln N / m` fitted on half the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundFit {
    pub statistic: ErrorStatistic,
    pub rate: f64,
    pub c1: f64,
    pub c2: f64,
    /// `(level, m)` of the fitting half.
    pub training: Vec<(u32, usize)>,
    /// `(level, m)` of the validation half.
    pub held_out: Vec<(u32, usize)>,
    /// Largest `measured / bound` over the held-out half.
    pub max_held_out_ratio: f64,
}

impl BoundFit {
    pub fn eval(&self, cells: usize, m: usize) -> f64 {
        let (a, b) = bound_features(cells, m, self.rate);
        self.c1 * a + self.c2 * b
    }

    /// The held-out half stays below `factor` times the bound.
    pub fn holds_within(&self, factor: f64) -> bool {
        self.max_held_out_ratio <= factor
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// One entry per `(level, m)`, level-major in config order.
    pub cells: Vec<RateCell>,
    pub rate: Option<f64>,
    pub rate_source: Option<RateSource>,
    /// `ln mean_err` against `ln N` at the largest `m`.
    pub bias_slope: Option<SlopeFit>,
    /// `ln(mean_sq_err - projection_sq_err)` against `ln m` at the smallest
    /// level.
    pub variance_slope: Option<SlopeFit>,
    pub bound: Option<BoundFit>,
    pub failed_trials: usize,
}

impl RateReport {
    pub fn cell(&self, level: u32, m: usize) -> Option<&RateCell> {
        self.cells.iter().find(|c| c.level == level && c.m == m)
    }
}

/// Outcome of one trial: squared error and empty-cell count per level.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub sq_err: Vec<f64>,
    pub empty_cells: Vec<usize>,
}

/// Regressor values on the quadrature nodes, weighted by the measure.
struct ErrorTable {
    nodes: Vec<PhasePoint>,
    weights: Vec<f64>,
    values: Vec<f64>,
    dim: usize,
}

impl ErrorTable {
    fn new(curve: &dyn Curve, measure: &MeasureOnS, quad: &Quadrature) -> Self {
        let dim = curve.dim();
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut values = Vec::new();
        let mut buf = vec![0.0; dim];
        for (p, w) in measure.discretize(quad) {
            if w == 0.0 {
                continue;
            }
            curve.eval_into(p, &mut buf);
            nodes.push(p);
            weights.push(w);
            values.extend_from_slice(&buf);
        }
        ErrorTable {
            nodes,
            weights,
            values,
            dim,
        }
    }

    /// `∫ ‖γ - c‖² dμ` for piecewise-constant coefficients `c` on `partition`.
    fn sq_error(&self, partition: &Partition, coeffs: &[Vec<f64>]) -> f64 {
        let d = self.dim;
        let mut acc = KahanSum::default();
        for (q, (&p, &w)) in self.nodes.iter().zip(&self.weights).enumerate() {
            let c = &coeffs[partition.cell_index(p)];
            let sq: f64 = self.values[q * d..(q + 1) * d]
                .iter()
                .zip(c)
                .map(|(g, c)| (g - c) * (g - c))
                .sum();
            acc.add(w * sq);
        }
        acc.value().max(0.0)
    }
}

/// Seed of trial `trial` at sample-count index `m_index`.
pub fn trial_seed(base: u64, m_index: usize, trial: usize) -> u64 {
    mix_seed(mix_seed(base, m_index as u64), trial as u64)
}

fn run_trial(
    curve: &AnalyticCurve,
    measure: &MeasureOnS,
    cfg: &ExperimentConfig,
    partitions: &[(u32, Partition)],
    table: &ErrorTable,
    m: usize,
    seed: u64,
) -> std::result::Result<TrialOutcome, EstimateError> {
    let finest = partitions.last().map_or(0, |(l, _)| *l);
    let mut sums = CellSums::new(finest, curve.dim());
    for_each_sample(curve, measure, &cfg.noise, m, seed, |s, x| sums.add(s, x));

    let mut sq_err = vec![0.0; cfg.levels.len()];
    let mut empty_cells = vec![0; cfg.levels.len()];
    let mut current = Some(sums);
    for (level, partition) in partitions.iter().rev() {
        while current.as_ref().is_some_and(|c| c.level() > *level) {
            current = current.and_then(|c| c.coarsen());
        }
        let level_sums = current.as_ref().expect("coarsening reaches every level");
        let estimate = level_sums.finish(partition)?;
        let err = table.sq_error(partition, estimate.coeffs());
        let empties = estimate.fills().len();
        for (i, _) in cfg.levels.iter().enumerate().filter(|(_, l)| *l == level) {
            sq_err[i] = err;
            empty_cells[i] = empties;
        }
    }
    Ok(TrialOutcome {
        sq_err,
        empty_cells,
    })
}

/// Resolves the approximation rate used by the bound fit.
pub fn resolve_rate(
    cfg: &ExperimentConfig,
    measure: &MeasureOnS,
    quad: &Quadrature,
) -> Result<Option<(f64, RateSource)>> {
    if let Some(r) = cfg.rate {
        return Ok(Some((r, RateSource::Configured)));
    }
    if let Some(r) = cfg.curve.nominal_rate() {
        return Ok(Some((r, RateSource::Nominal)));
    }
    let mut levels = cfg.levels.clone();
    levels.sort_unstable();
    levels.dedup();
    if levels.len() < 3 {
        return Ok(None);
    }
    let (mut ns, mut es) = (Vec::new(), Vec::new());
    for &level in &levels {
        let partition = Partition::dyadic(level)?;
        let proj = project_curve(&cfg.curve, &partition, measure, quad)?;
        let table = ErrorTable::new(&cfg.curve, measure, quad);
        ns.push((1u64 << level) as f64);
        es.push(table.sq_error(&partition, proj.coeffs()).sqrt());
    }
    Ok(fit_log_log(&ns, &es)
        .filter(|f| f.slope < 0.0)
        .map(|f| (-f.slope, RateSource::Estimated)))
}

/// Runs the Monte-Carlo rate study: for every `(n, m)` in the grid, `T`
/// independent datasets are drawn, fitted with the partition estimator,
/// and scored by their `L²_μ` distance to the regressor.
///
/// One dataset per `(m, trial)` serves every level. Trials run in parallel
/// and are reduced in trial order, so results do not depend on the thread
/// count.
pub fn run_rate_study(cfg: &ExperimentConfig) -> Result<RateReport> {
    cfg.validate()?;
    let measure = cfg.measure.build()?;
    let quad = cfg.quadrature()?;
    let regressor = regressor_of(&cfg.curve, &cfg.noise);

    let mut distinct = cfg.levels.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let partitions: Vec<(u32, Partition)> = distinct
        .iter()
        .map(|&l| Ok((l, Partition::dyadic(l)?)))
        .collect::<Result<_>>()?;
    let table = ErrorTable::new(&regressor, &measure, &quad);

    let projection_sq: Vec<f64> = cfg
        .levels
        .iter()
        .map(|&l| {
            let partition = Partition::dyadic(l)?;
            let proj = project_curve(&regressor, &partition, &measure, &quad)?;
            Ok(table.sq_error(&partition, proj.coeffs()))
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..cfg.sample_counts.len())
        .flat_map(|i| (0..cfg.trials).map(move |t| (i, t)))
        .collect();
    let outcomes: Vec<std::result::Result<TrialOutcome, EstimateError>> = jobs
        .par_iter()
        .map(|&(i, t)| {
            run_trial(
                &cfg.curve,
                &measure,
                cfg,
                &partitions,
                &table,
                cfg.sample_counts[i],
                trial_seed(cfg.seed, i, t),
            )
        })
        .collect();

    let mut cells = Vec::with_capacity(cfg.levels.len() * cfg.sample_counts.len());
    let mut failed_total = 0;
    for (li, &level) in cfg.levels.iter().enumerate() {
        for (mi, &m) in cfg.sample_counts.iter().enumerate() {
            let trial_outcomes = &outcomes[mi * cfg.trials..(mi + 1) * cfg.trials];
            let ok: Vec<&TrialOutcome> = trial_outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
            let failed = trial_outcomes.len() - ok.len();
            if li == 0 {
                failed_total += failed;
            }
            let sq: Vec<f64> = ok.iter().map(|o| o.sq_err[li]).collect();
            let empties: Vec<f64> = ok.iter().map(|o| o.empty_cells[li] as f64).collect();
            cells.push(aggregate_cell(level, m, &sq, &empties, failed, projection_sq[li]));
        }
    }

    let rate = resolve_rate(cfg, &measure, &quad)?;
    let bias_slope = bias_slope(&cells, cfg);
    let variance_slope = variance_slope(&cells, cfg);
    let bound = match rate {
        Some((r, _)) => fit_bound(&cells, cfg, r, ErrorStatistic::MeanError),
        None => None,
    };
    Ok(RateReport {
        cells,
        rate: rate.map(|(r, _)| r),
        rate_source: rate.map(|(_, s)| s),
        bias_slope,
        variance_slope,
        bound,
        failed_trials: failed_total,
    })
}

/// Reduces per-trial squared errors (in trial order) to a grid cell.
pub fn aggregate_cell(
    level: u32,
    m: usize,
    sq_err: &[f64],
    empty_cells: &[f64],
    failed_trials: usize,
    projection_sq_err: f64,
) -> RateCell {
    let err: Vec<f64> = sq_err.iter().map(|v| v.sqrt()).collect();
    let (mean_sq_err, se_sq_err) = mean_and_se(sq_err);
    let (mean_err, se_err) = mean_and_se(&err);
    let (mean_empty_cells, _) = mean_and_se(empty_cells);
    RateCell {
        level,
        cells: 1usize << level,
        m,
        trials: sq_err.len(),
        failed_trials,
        mean_sq_err,
        se_sq_err,
        mean_err,
        se_err,
        projection_sq_err,
        mean_empty_cells,
    }
}

fn bias_slope(cells: &[RateCell], cfg: &ExperimentConfig) -> Option<SlopeFit> {
    let m = *cfg.sample_counts.iter().max()?;
    let row: Vec<&RateCell> = cells.iter().filter(|c| c.m == m && c.trials > 0).collect();
    let xs: Vec<f64> = row.iter().map(|c| c.cells as f64).collect();
    let ys: Vec<f64> = row.iter().map(|c| c.mean_err).collect();
    let fit = fit_log_log(&xs, &ys)?;
    Some(SlopeFit {
        slope: fit.slope,
        intercept: fit.intercept,
        fixed: m,
        points: xs.len(),
    })
}

fn variance_slope(cells: &[RateCell], cfg: &ExperimentConfig) -> Option<SlopeFit> {
    let level = *cfg.levels.iter().min()?;
    let column: Vec<&RateCell> = cells
        .iter()
        .filter(|c| c.level == level && c.trials > 0)
        .collect();
    let xs: Vec<f64> = column.iter().map(|c| c.m as f64).collect();
    let ys: Vec<f64> = column
        .iter()
        .map(|c| c.mean_sq_err - c.projection_sq_err)
        .collect();
    let fit = fit_log_log(&xs, &ys)?;
    Some(SlopeFit {
        slope: fit.slope,
        intercept: fit.intercept,
        fixed: level as usize,
        points: ys.iter().filter(|y| **y > 0.0).count(),
    })
}

fn bound_features(cells: usize, m: usize, rate: f64) -> (f64, f64) {
    let n = cells as f64;
    (n.powf(-rate), n * n.ln() / m as f64)
}

/// Fits `C₁ N^{-r} + C₂ N ln N / m` to the statistic on the grid points with
/// even `level index + m index`, then checks the other half.
///
/// The fit minimizes relative squared residuals subject to `C₁, C₂ ≥ 0` and
/// the bound dominating every training point. Returns `None` when either
/// half is empty.
pub fn fit_bound(
    cells: &[RateCell],
    cfg: &ExperimentConfig,
    rate: f64,
    statistic: ErrorStatistic,
) -> Option<BoundFit> {
    let mut train = Vec::new();
    let mut held = Vec::new();
    for (li, &level) in cfg.levels.iter().enumerate() {
        for (mi, &m) in cfg.sample_counts.iter().enumerate() {
            let Some(cell) = cells.iter().find(|c| c.level == level && c.m == m) else {
                continue;
            };
            if cell.trials == 0 {
                continue;
            }
            if (li + mi) % 2 == 0 {
                train.push(cell);
            } else {
                held.push(cell);
            }
        }
    }
    if train.is_empty() || held.is_empty() {
        return None;
    }

    let rows: Vec<([f64; 2], f64)> = train
        .iter()
        .map(|c| {
            let (a, b) = bound_features(c.cells, c.m, rate);
            ([a, b], statistic.of(c))
        })
        .collect();
    let [c1, c2] = dominating_least_squares(&rows)?;
    let mut fit = BoundFit {
        statistic,
        rate,
        c1,
        c2,
        training: train.iter().map(|c| (c.level, c.m)).collect(),
        held_out: held.iter().map(|c| (c.level, c.m)).collect(),
        max_held_out_ratio: 0.0,
    };
    fit.max_held_out_ratio = held
        .iter()
        .map(|c| {
            let bound = fit.eval(c.cells, c.m);
            let y = statistic.of(c);
            if y == 0.0 {
                0.0
            } else if bound > 0.0 {
                y / bound
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);
    Some(fit)
}

/// Minimizes `Σ ((a·c - y) / y)²` over `c ∈ ℝ²` subject to `c ≥ 0` and
/// `a·c ≥ y` for every row.
///
/// With two unknowns the optimum lies on an active set of at most two
/// constraints, so every such set is tried and the best feasible candidate
/// kept.
fn dominating_least_squares(rows: &[([f64; 2], f64)]) -> Option<[f64; 2]> {
    let scaled: Vec<([f64; 2], f64)> = rows
        .iter()
        .map(|&(a, y)| {
            let w = if y > 0.0 { 1.0 / y } else { 1.0 };
            ([a[0] * w, a[1] * w], y * w)
        })
        .collect();
    let objective = |c: [f64; 2]| -> f64 {
        scaled
            .iter()
            .map(|(a, y)| {
                let r = a[0] * c[0] + a[1] * c[1] - y;
                r * r
            })
            .sum()
    };

    // constraints g·c ≥ h
    let mut constraints: Vec<([f64; 2], f64)> = vec![([1.0, 0.0], 0.0), ([0.0, 1.0], 0.0)];
    constraints.extend(rows.iter().copied());
    let feasible = |c: [f64; 2]| -> bool {
        constraints.iter().all(|(g, h)| {
            let v = g[0] * c[0] + g[1] * c[1];
            v >= h - 1e-12 * h.abs().max(1e-300)
        })
    };

    // normal equations H c = q
    let mut h = [[0.0; 2]; 2];
    let mut q = [0.0; 2];
    for (a, y) in &scaled {
        for i in 0..2 {
            q[i] += a[i] * y;
            for j in 0..2 {
                h[i][j] += a[i] * a[j];
            }
        }
    }

    let mut candidates: Vec<[f64; 2]> = Vec::new();
    if let Some(c) = solve2(h, q) {
        candidates.push(c);
    }
    for (g, hv) in &constraints {
        // minimize over the line g·c = hv
        let dir = [-g[1], g[0]];
        let norm2 = g[0] * g[0] + g[1] * g[1];
        if norm2 == 0.0 {
            continue;
        }
        let base = [g[0] * hv / norm2, g[1] * hv / norm2];
        let hd = [
            h[0][0] * dir[0] + h[0][1] * dir[1],
            h[1][0] * dir[0] + h[1][1] * dir[1],
        ];
        let curvature = dir[0] * hd[0] + dir[1] * hd[1];
        let hb = [
            h[0][0] * base[0] + h[0][1] * base[1],
            h[1][0] * base[0] + h[1][1] * base[1],
        ];
        let slope = dir[0] * (hb[0] - q[0]) + dir[1] * (hb[1] - q[1]);
        if curvature > 0.0 {
            let t = -slope / curvature;
            candidates.push([base[0] + t * dir[0], base[1] + t * dir[1]]);
        }
    }
    for i in 0..constraints.len() {
        for j in i + 1..constraints.len() {
            let (gi, hi) = constraints[i];
            let (gj, hj) = constraints[j];
            if let Some(c) = solve2([gi, gj], [hi, hj]) {
                candidates.push(c);
            }
        }
    }

    candidates
        .into_iter()
        .filter(|c| c[0].is_finite() && c[1].is_finite() && feasible(*c))
        .map(|c| [c[0].max(0.0), c[1].max(0.0)])
        .min_by(|a, b| objective(*a).total_cmp(&objective(*b)))
}

fn solve2(a: [[f64; 2]; 2], b: [f64; 2]) -> Option<[f64; 2]> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let scale = a[0][0].abs().max(a[1][1].abs()).max(a[0][1].abs()).max(a[1][0].abs());
    if det.abs() <= 1e-14 * scale * scale || scale == 0.0 {
        return None;
    }
    Some([
        (b[0] * a[1][1] - a[0][1] * b[1]) / det,
        (a[0][0] * b[1] - b[0] * a[1][0]) / det,
    ])
}
