use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::manifold::{chordal_distance, geodesic_distance, PhasePoint};

use super::{validate_samples, Curve, EstimateError, Result, Sample};

/// Largest condition number of `KᵀK` accepted without regularization.
pub const MAX_UNREGULARIZED_CONDITION: f64 = 1e12;

/// Distance used inside the exponential kernel.
///
/// `Chordal` measures in the plane embedding (range `[0, 2]`); `Geodesic`
/// measures arc length in periods (range `[0, 1/2]`), so the same `β` gives
/// a much wider kernel under `Geodesic`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelMetric {
    #[default]
    Chordal,
    Geodesic,
}

impl KernelMetric {
    pub fn distance(self, a: PhasePoint, b: PhasePoint) -> f64 {
        match self {
            KernelMetric::Chordal => chordal_distance(a, b),
            KernelMetric::Geodesic => geodesic_distance(a, b),
        }
    }
}

impl std::str::FromStr for KernelMetric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "chordal" => Ok(KernelMetric::Chordal),
            "geodesic" => Ok(KernelMetric::Geodesic),
            other => Err(format!("unknown metric '{other}' (expected chordal|geodesic)")),
        }
    }
}

impl std::fmt::Display for KernelMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            KernelMetric::Chordal => "chordal",
            KernelMetric::Geodesic => "geodesic",
        })
    }
}

/// `exp(-β · dist(a, b)²)`.
#[inline]
pub fn kernel_value(metric: KernelMetric, beta: f64, a: PhasePoint, b: PhasePoint) -> f64 {
    let r = metric.distance(a, b);
    (-beta * r * r).exp()
}

/// Regularized least-squares fit in the span of exponential kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelEstimate {
    centers: Vec<PhasePoint>,
    beta: f64,
    lambda: f64,
    metric: KernelMetric,
    /// `n × d`, one row per center.
    coeffs: Vec<Vec<f64>>,
    /// Condition estimate of `KᵀK + mλI`; `None` for loaded estimates.
    condition: Option<f64>,
}

impl KernelEstimate {
    /// Rebuilds an estimate from stored parameters and coefficients.
    pub fn from_parts(
        centers: Vec<PhasePoint>,
        beta: f64,
        lambda: f64,
        metric: KernelMetric,
        coeffs: Vec<Vec<f64>>,
    ) -> Result<Self> {
        check_centers(&centers)?;
        check_params(beta, lambda)?;
        if coeffs.len() != centers.len() {
            return Err(EstimateError::DimensionMismatch {
                expected: centers.len(),
                got: coeffs.len(),
            });
        }
        let d = coeffs.first().map_or(0, Vec::len);
        if d == 0 {
            return Err(EstimateError::ZeroDimension);
        }
        if let Some(row) = coeffs.iter().find(|row| row.len() != d) {
            return Err(EstimateError::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
        Ok(KernelEstimate {
            centers,
            beta,
            lambda,
            metric,
            coeffs,
            condition: None,
        })
    }

    pub fn centers(&self) -> &[PhasePoint] {
        &self.centers
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn metric(&self) -> KernelMetric {
        self.metric
    }

    pub fn coeffs(&self) -> &[Vec<f64>] {
        &self.coeffs
    }

    pub fn condition(&self) -> Option<f64> {
        self.condition
    }

    /// Euclidean norm of the whole coefficient table.
    pub fn coeff_norm(&self) -> f64 {
        self.coeffs
            .iter()
            .flatten()
            .map(|c| c * c)
            .sum::<f64>()
            .sqrt()
    }
}

impl Curve for KernelEstimate {
    fn dim(&self) -> usize {
        self.coeffs[0].len()
    }

    fn eval_into(&self, s: PhasePoint, out: &mut [f64]) {
        out.fill(0.0);
        for (center, row) in self.centers.iter().zip(&self.coeffs) {
            let k = kernel_value(self.metric, self.beta, *center, s);
            for (o, c) in out.iter_mut().zip(row) {
                *o += c * k;
            }
        }
    }
}

fn check_params(beta: f64, lambda: f64) -> Result<()> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(EstimateError::InvalidBeta(beta));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(EstimateError::InvalidLambda(lambda));
    }
    Ok(())
}

fn check_centers(centers: &[PhasePoint]) -> Result<()> {
    if centers.is_empty() {
        return Err(EstimateError::NoCenters);
    }
    let mut sorted: Vec<f64> = centers.iter().map(|c| c.value()).collect();
    sorted.sort_by(f64::total_cmp);
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(EstimateError::DuplicateCenter(w[0]));
    }
    Ok(())
}

/// Minimizes `(1/m) Σ ‖x_i - Σ_j a_j k(ξ_j, s_i)‖² + λ ‖a‖²` coordinatewise.
///
/// The normal equations `(KᵀK + mλI) a = Kᵀx` are never formed. Instead the
/// stacked system `[K; √(mλ) I] a ≈ [x; 0]` is reduced by Householder QR and
/// the triangular factor is solved through its SVD, which also yields the
/// condition estimate. Without regularization a condition estimate of `KᵀK`
/// above [`MAX_UNREGULARIZED_CONDITION`] is refused.
pub fn fit_kernel(
    samples: &[Sample],
    centers: &[PhasePoint],
    beta: f64,
    lambda: f64,
    metric: KernelMetric,
) -> Result<KernelEstimate> {
    let d = validate_samples(samples)?;
    check_centers(centers)?;
    check_params(beta, lambda)?;
    let m = samples.len();
    let n = centers.len();

    if lambda == 0.0 && m < n {
        return Err(EstimateError::SingularSystem {
            condition: f64::INFINITY,
            suggested_lambda: 1e-8,
        });
    }

    let extra = if lambda > 0.0 { n } else { 0 };
    let ridge = (m as f64 * lambda).sqrt();
    let design = DMatrix::from_fn(m + extra, n, |i, j| {
        if i < m {
            kernel_value(metric, beta, samples[i].s, centers[j])
        } else if i - m == j {
            ridge
        } else {
            0.0
        }
    });
    let mut rhs = DMatrix::from_fn(m + extra, d, |i, j| if i < m { samples[i].x[j] } else { 0.0 });

    let qr = design.qr();
    qr.q_tr_mul(&mut rhs);
    let r = qr.r();
    let reduced = rhs.rows(0, n).into_owned();

    let svd = r.svd(true, true);
    let sv = &svd.singular_values;
    let s_max = sv.max();
    let s_min = sv.min();
    let condition = if s_min > 0.0 {
        (s_max / s_min).powi(2)
    } else {
        f64::INFINITY
    };
    if lambda == 0.0 && (condition.is_nan() || condition > MAX_UNREGULARIZED_CONDITION) {
        return Err(EstimateError::SingularSystem {
            condition,
            suggested_lambda: (s_max * s_max * 1e-10 / m as f64).max(f64::MIN_POSITIVE),
        });
    }
    let solution = svd
        .solve(&reduced, 0.0)
        .expect("SVD was computed with both singular vector sets");

    let coeffs = (0..n)
        .map(|j| (0..d).map(|c| solution[(j, c)]).collect())
        .collect();
    Ok(KernelEstimate {
        centers: centers.to_vec(),
        beta,
        lambda,
        metric,
        coeffs,
        condition: Some(condition),
    })
}

/// 2-norm condition number of the Gram matrix `k(ξ_i, ξ_j)` of the centers.
pub fn gram_condition(centers: &[PhasePoint], beta: f64, metric: KernelMetric) -> Result<f64> {
    check_centers(centers)?;
    check_params(beta, 0.0)?;
    let n = centers.len();
    let gram = DMatrix::from_fn(n, n, |i, j| kernel_value(metric, beta, centers[i], centers[j]));
    let sv = gram.singular_values();
    let s_min = sv.min();
    Ok(if s_min > 0.0 {
        sv.max() / s_min
    } else {
        f64::INFINITY
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::empirical_risk;
    use crate::manifold::make_partition;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn p(s: f64) -> PhasePoint {
        PhasePoint::new(s).unwrap()
    }

    fn jittered(rng: &mut ChaCha8Rng, n: usize) -> Vec<PhasePoint> {
        (0..n)
            .map(|k| p((k as f64 + 0.5 + rng.random_range(-0.25..0.25)) / n as f64))
            .collect()
    }

    #[test]
    fn single_sample_identity() {
        let samples = vec![Sample::new(p(0.2), vec![5.0])];
        let est = fit_kernel(&samples, &[p(0.2)], 3.0, 0.0, KernelMetric::Chordal).unwrap();
        assert!((est.coeffs()[0][0] - 5.0).abs() < 1e-14);
    }

    #[test]
    fn narrow_kernel_is_near_identity() {
        let centers = make_partition(3).unwrap().representatives().to_vec();
        let samples: Vec<Sample> = centers
            .iter()
            .enumerate()
            .map(|(i, &c)| Sample::new(c, vec![i as f64 - 3.0]))
            .collect();
        let est = fit_kernel(&samples, &centers, 400.0, 0.0, KernelMetric::Chordal).unwrap();
        // dense oracle: the Gram matrix at β = 400 differs from I by < 1e-100
        for (i, row) in est.coeffs().iter().enumerate() {
            assert!((row[0] - (i as f64 - 3.0)).abs() < 1e-3);
        }
    }

    #[test]
    fn interpolates_when_centers_are_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let phases = jittered(&mut rng, 16);
        let samples: Vec<Sample> = phases
            .iter()
            .map(|&s| Sample::new(s, vec![(TAU * s.value()).sin() + 0.3 * rng.random::<f64>()]))
            .collect();
        let est = fit_kernel(&samples, &phases, 25.0, 0.0, KernelMetric::Chordal).unwrap();
        let scale = samples.iter().map(|s| s.x[0].abs()).fold(0.0, f64::max);
        for s in &samples {
            let r = (est.eval(s.s)[0] - s.x[0]).abs() / scale;
            assert!(r <= 1e-6, "relative residual {r}");
        }
    }

    #[test]
    fn rejects_invalid_inputs() {
        let samples = vec![Sample::new(p(0.2), vec![1.0]), Sample::new(p(0.4), vec![1.0])];
        let metric = KernelMetric::Chordal;
        assert_eq!(
            fit_kernel(&samples, &[p(0.1), p(0.1)], 1.0, 0.0, metric),
            Err(EstimateError::DuplicateCenter(0.1))
        );
        assert_eq!(
            fit_kernel(&samples, &[], 1.0, 0.0, metric),
            Err(EstimateError::NoCenters)
        );
        assert!(matches!(
            fit_kernel(&samples, &[p(0.1)], 0.0, 0.0, metric),
            Err(EstimateError::InvalidBeta(_))
        ));
        assert!(matches!(
            fit_kernel(&samples, &[p(0.1)], 1.0, -1.0, metric),
            Err(EstimateError::InvalidLambda(_))
        ));
        assert!(matches!(
            fit_kernel(&samples, &[p(0.1), p(0.2), p(0.3)], 1.0, 0.0, metric),
            Err(EstimateError::SingularSystem { .. })
        ));
    }

    #[test]
    fn wide_kernel_without_ridge_is_refused_and_ridge_recovers() {
        let centers = make_partition(5).unwrap().representatives().to_vec();
        let samples: Vec<Sample> = (0..200)
            .map(|i| {
                let s = p(i as f64 / 200.0);
                Sample::new(s, vec![(TAU * s.value()).cos()])
            })
            .collect();
        let err = fit_kernel(&samples, &centers, 0.5, 0.0, KernelMetric::Chordal).unwrap_err();
        let suggested = match err {
            EstimateError::SingularSystem {
                condition,
                suggested_lambda,
            } => {
                assert!(condition > MAX_UNREGULARIZED_CONDITION);
                assert!(err.to_string().contains("lambda"));
                suggested_lambda
            }
            other => panic!("unexpected {other:?}"),
        };
        let est = fit_kernel(&samples, &centers, 0.5, suggested, KernelMetric::Chordal).unwrap();
        assert!(est.condition().unwrap().is_finite());
        assert!(empirical_risk(&est, &samples).unwrap() < 1e-3);
    }

    #[test]
    fn ridge_shrinks_coefficients_monotonically() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let samples: Vec<Sample> = (0..120)
            .map(|_| {
                let s = p(rng.random());
                Sample::new(s, vec![(TAU * s.value()).sin() + rng.random_range(-0.2..0.2), s.value()])
            })
            .collect();
        let centers = make_partition(4).unwrap().representatives().to_vec();
        let mut prev = f64::INFINITY;
        for lambda in [0.0, 1e-8, 1e-6, 1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0] {
            let est = fit_kernel(&samples, &centers, 25.0, lambda, KernelMetric::Chordal).unwrap();
            let norm = est.coeff_norm();
            assert!(norm <= prev * (1.0 + 1e-12), "lambda {lambda}: {norm} > {prev}");
            prev = norm;
        }
    }

    #[test]
    fn ridge_solution_satisfies_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let samples: Vec<Sample> = (0..60)
            .map(|_| Sample::new(p(rng.random()), vec![rng.random_range(-1.0..1.0)]))
            .collect();
        let centers = make_partition(3).unwrap().representatives().to_vec();
        let (beta, lambda) = (10.0, 0.01);
        let est = fit_kernel(&samples, &centers, beta, lambda, KernelMetric::Geodesic).unwrap();
        let m = samples.len();
        let k = DMatrix::from_fn(m, 8, |i, j| {
            kernel_value(KernelMetric::Geodesic, beta, samples[i].s, centers[j])
        });
        let x = DMatrix::from_fn(m, 1, |i, _| samples[i].x[0]);
        let a = DMatrix::from_fn(8, 1, |j, _| est.coeffs()[j][0]);
        let lhs = (k.transpose() * &k + DMatrix::identity(8, 8) * (m as f64 * lambda)) * a;
        let rhs = k.transpose() * x;
        assert!((lhs - &rhs).norm() < 1e-10 * rhs.norm().max(1.0));
    }

    #[test]
    fn gram_condition_agrees_with_eigenvalues() {
        let centers = make_partition(4).unwrap().representatives().to_vec();
        let mut prev = 0.0;
        for beta in [400.0, 100.0, 25.0, 6.0] {
            let cond = gram_condition(&centers, beta, KernelMetric::Chordal).unwrap();
            let gram = DMatrix::from_fn(16, 16, |i, j| {
                kernel_value(KernelMetric::Chordal, beta, centers[i], centers[j])
            });
            let eig = gram.symmetric_eigen().eigenvalues;
            let oracle = eig.max() / eig.min();
            assert!((cond / oracle - 1.0).abs() < 1e-8, "beta {beta}: {cond} vs {oracle}");
            assert!(cond >= prev);
            prev = cond;
        }
    }

    #[test]
    fn metric_parses() {
        assert_eq!("chordal".parse::<KernelMetric>(), Ok(KernelMetric::Chordal));
        assert_eq!("geodesic".parse::<KernelMetric>(), Ok(KernelMetric::Geodesic));
        assert!("euclid".parse::<KernelMetric>().is_err());
    }
}
