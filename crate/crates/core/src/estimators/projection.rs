use crate::manifold::{MeasureOnS, Partition, PhasePoint, Quadrature};
use crate::stats::{fit_log_log, KahanSum};

use super::{Curve, EstimateError, PiecewiseConstant, Result};

/// Per-cell `μ`-averages of `g`: the coefficients of the `L²_μ`-orthogonal
/// projection onto functions constant on the cells of `partition`.
pub fn project_l2<G>(
    g: G,
    partition: &Partition,
    measure: &MeasureOnS,
    quad: &Quadrature,
) -> Result<Vec<f64>>
where
    G: Fn(PhasePoint) -> f64 + Send + Sync,
{
    let curve = super::scalar_curve(g);
    let pc = project_curve(&curve, partition, measure, quad)?;
    Ok(pc.coordinate(0))
}

/// Vector-valued projection of `curve` onto piecewise constants.
pub fn project_curve(
    curve: &dyn Curve,
    partition: &Partition,
    measure: &MeasureOnS,
    quad: &Quadrature,
) -> Result<PiecewiseConstant> {
    let n = partition.num_cells();
    let d = curve.dim();
    let mut mass = vec![KahanSum::default(); n];
    let mut moments = vec![KahanSum::default(); n * d];
    let mut buf = vec![0.0; d];
    for (p, w) in measure.discretize(quad) {
        if w == 0.0 {
            continue;
        }
        let k = partition.cell_index(p);
        curve.eval_into(p, &mut buf);
        mass[k].add(w);
        for (acc, v) in moments[k * d..(k + 1) * d].iter_mut().zip(&buf) {
            acc.add(w * v);
        }
    }
    let mut coeffs = Vec::with_capacity(n);
    for k in 0..n {
        let mk = mass[k].value();
        if mk <= 0.0 {
            return Err(EstimateError::ZeroMeasureCell { cell: k });
        }
        coeffs.push(
            moments[k * d..(k + 1) * d]
                .iter()
                .map(|acc| acc.value() / mk)
                .collect(),
        );
    }
    Ok(PiecewiseConstant::new(partition.clone(), coeffs))
}

/// `∫ ‖f - g‖² dμ` by quadrature (or sample mean for an empirical measure).
pub fn l2_error_sq(
    f: &dyn Curve,
    g: &dyn Curve,
    measure: &MeasureOnS,
    quad: &Quadrature,
) -> Result<f64> {
    if f.dim() != g.dim() {
        return Err(EstimateError::DimensionMismatch {
            expected: f.dim(),
            got: g.dim(),
        });
    }
    let d = f.dim();
    let (mut fb, mut gb) = (vec![0.0; d], vec![0.0; d]);
    let mut acc = KahanSum::default();
    for (p, w) in measure.discretize(quad) {
        if w == 0.0 {
            continue;
        }
        f.eval_into(p, &mut fb);
        g.eval_into(p, &mut gb);
        let sq: f64 = fb.iter().zip(&gb).map(|(a, b)| (a - b) * (a - b)).sum();
        acc.add(w * sq);
    }
    Ok(acc.value().max(0.0))
}

/// `‖f - g‖_{L²_μ}`.
pub fn l2_error(
    f: &dyn Curve,
    g: &dyn Curve,
    measure: &MeasureOnS,
    quad: &Quadrature,
) -> Result<f64> {
    l2_error_sq(f, g, measure, quad).map(f64::sqrt)
}

/// Fitted decay `‖(I - Π_n) g‖ ≈ C · N(n)^{-r}` over a range of levels.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxRate {
    /// `r`; `+∞` when `exact` is set.
    pub rate: f64,
    /// `C`; zero when `exact` is set.
    pub constant: f64,
    /// Some level reproduced `g` to rounding error (`g` is piecewise constant
    /// at that resolution).
    pub exact: bool,
    /// `(level, projection error)` pairs.
    pub errors: Vec<(u32, f64)>,
}

/// Errors below this fraction of `max(1, ‖g‖)` count as exact reproduction.
const EXACT_TOL: f64 = 1e-12;

/// Estimates the linear approximation rate of `g` by projecting onto each
/// level and regressing `ln e_n` on `ln N(n)`.
pub fn estimate_approx_rate<G>(
    g: G,
    levels: &[u32],
    measure: &MeasureOnS,
    quad: &Quadrature,
) -> Result<ApproxRate>
where
    G: Fn(PhasePoint) -> f64 + Send + Sync,
{
    if levels.len() < 3 {
        return Err(EstimateError::TooFewLevels {
            needed: 3,
            got: levels.len(),
        });
    }
    let curve = super::scalar_curve(g);
    let zero = super::scalar_curve(|_| 0.0);
    let norm = l2_error(&curve, &zero, measure, quad)?;
    let mut errors = Vec::with_capacity(levels.len());
    for &level in levels {
        let partition = Partition::dyadic(level)?;
        let proj = project_curve(&curve, &partition, measure, quad)?;
        errors.push((level, l2_error(&curve, &proj, measure, quad)?));
    }
    let exact = errors.iter().any(|&(_, e)| e <= EXACT_TOL * norm.max(1.0));
    if exact {
        return Ok(ApproxRate {
            rate: f64::INFINITY,
            constant: 0.0,
            exact: true,
            errors,
        });
    }
    let ns: Vec<f64> = errors.iter().map(|&(l, _)| (1u64 << l) as f64).collect();
    let es: Vec<f64> = errors.iter().map(|&(_, e)| e).collect();
    let fit = fit_log_log(&ns, &es).expect("at least three distinct levels with positive error");
    Ok(ApproxRate {
        rate: -fit.slope,
        constant: fit.intercept.exp(),
        exact: false,
        errors,
    })
}
