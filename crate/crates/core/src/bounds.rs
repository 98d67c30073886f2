//! Closed-form mixing-time bounds and the intercept lower bound.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::eigen_extremes;
use crate::model::{PosteriorCache, PriorPrecision, ProbitModel};
use crate::quadrature::integrate;
use crate::special::{h, h_prime, h_second};

/// `(2 + λ_max)·log(KL/ε)` iterations of DA.
pub fn da_mixing_bound(lam_max: f64, log_kl_over_eps: f64) -> f64 {
    (2.0 + lam_max) * log_kl_over_eps
}

/// `(1 + λ_max)/(1 + λ_min)·log(KL/ε)` CG sweeps.
pub fn cg_mixing_bound(lam_max: f64, lam_min: f64, log_kl_over_eps: f64) -> f64 {
    (1.0 + lam_max) / (1.0 + lam_min) * log_kl_over_eps
}

/// `λ_max(D^{1/2}(I + M)D^{1/2})` with `D = diag((I + M)⁻¹)`.
pub fn cg_refined_factor(cache: &PosteriorCache) -> f64 {
    let n = cache.q.nrows();
    if n == 0 {
        return 1.0;
    }
    let mut a = cache.m_matrix();
    for i in 0..n {
        a[(i, i)] += 1.0;
    }
    let d = DMatrix::from_fn(n, 1, |i, _| cache.q[(i, i)].sqrt());
    let scaled = DMatrix::from_fn(n, n, |i, j| d[i] * a[(i, j)] * d[j]);
    eigen_extremes(&scaled).1
}

pub fn cg_refined_bound(cache: &PosteriorCache, log_kl_over_eps: f64) -> f64 {
    cg_refined_factor(cache) * log_kl_over_eps
}

/// Upper bound on `log KL(μ, π)` for the prior start:
/// `log(2n + n·log(2(1 + nλ_max)))`.
pub fn prior_start_kl_log_bound(n: usize, lam_max: f64) -> f64 {
    let n = n as f64;
    (2.0 * n + n * (2.0 * (1.0 + n * lam_max)).ln()).ln()
}

/// Almost-sure limits `(c(1+√r)², c(1-√min{1,r})²)` of the extreme
/// eigenvalues of `M` under a random design with `n/p → r`.
pub fn random_design_limits(c: f64, r: f64) -> (f64, f64) {
    let upper = c * (1.0 + r.sqrt()).powi(2);
    let lower = c * (1.0 - r.min(1.0).sqrt()).powi(2);
    (upper, lower)
}

/// DA and CG factors `(2 + 2b, 1 + 2b)` under the prior variance `b/(n+p)`.
pub fn recipe_bound(b: f64) -> (f64, f64) {
    (2.0 + 2.0 * b, 1.0 + 2.0 * b)
}

/// Mean and variance of the intercept-only posterior
/// `π(β) ∝ N(β | mean, variance)·Φ(β)^ones·Φ(-β)^zeros` by adaptive quadrature.
pub fn intercept_posterior_moments(prior_mean: f64, prior_variance: f64, ones: usize, zeros: usize) -> Result<(f64, f64)> {
    if !(prior_variance > 0.0) {
        return Err(Error::InvalidArgument("prior variance must be positive".into()));
    }
    let (a, b) = (ones as f64, zeros as f64);
    let log_f = |x: f64| -0.5 * (x - prior_mean).powi(2) / prior_variance - a * h(x) - b * h(-x);
    let grad = |x: f64| -(x - prior_mean) / prior_variance - a * h_prime(x) + b * h_prime(-x);
    let curv = |x: f64| 1.0 / prior_variance + a * h_second(x) + b * h_second(-x);

    // log-concave target: Newton from the prior mean converges to the mode
    let mut mode = prior_mean;
    for _ in 0..200 {
        let step = grad(mode) / curv(mode);
        mode += step;
        if step.abs() <= 1e-14 * (1.0 + mode.abs()) {
            break;
        }
    }
    let width = curv(mode).sqrt().recip();
    let top = log_f(mode);
    let reach = |dir: f64| {
        let mut k = 12.0;
        while log_f(mode + dir * k * width) > top - 50.0 {
            k *= 1.5;
        }
        mode + dir * k * width
    };
    let (lo, hi) = (reach(-1.0), reach(1.0));
    let w = |x: f64| (log_f(x) - top).exp();
    let z = integrate(w, lo, hi, 1e-13, 0.0)?;
    let m1 = integrate(|x| (x - mode) * w(x), lo, hi, 1e-13, 1e-15 * z * width)?;
    let m2 = integrate(|x| (x - mode).powi(2) * w(x), lo, hi, 1e-13, 0.0)?;
    let shift = m1 / z;
    Ok((mode + shift, m2 / z - shift * shift))
}

/// `Var_π(β₁)` for intercept-only data with all responses equal to one,
/// prior `N(0, prior_variance)`.
pub fn var_beta1_quadrature(prior_variance: f64, n: usize) -> Result<f64> {
    Ok(intercept_posterior_moments(0.0, prior_variance, n, 0)?.1)
}

/// `max{0, ½((1/c + n)·Var - 1)·log(2/ε)}`, `c` the prior variance.
pub fn lower_bound_intercept(prior_variance: f64, n: usize, var_beta1: f64, epsilon: f64) -> f64 {
    let bracket = (1.0 / prior_variance + n as f64) * var_beta1 - 1.0;
    (0.5 * bracket * (2.0 / epsilon).ln()).max(0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: usize,
    pub p: usize,
    pub lam_max: f64,
    pub lam_min: f64,
    pub condition_number: f64,
    pub kl_start_log: f64,
    pub log_kl_over_eps: f64,
    pub da_upper: f64,
    pub cg_upper: f64,
    pub cg_refined_upper: f64,
    pub lower_intercept: Option<f64>,
    pub epsilon: f64,
}

/// All bounds for a built model. The intercept lower bound is filled in for
/// intercept-only designs with an isotropic prior and all-equal responses.
pub fn bound_report(model: &ProbitModel, cache: &PosteriorCache, epsilon: f64) -> Result<BoundReport> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be in (0, 1), got {epsilon}")));
    }
    let n = model.n();
    let kl_start_log = if n == 0 { 0.0 } else { prior_start_kl_log_bound(n, cache.lam_max) };
    let log_term = kl_start_log + (1.0 / epsilon).ln();
    let intercept_only = model.p() == 1 && model.x.iter().all(|&v| v == 1.0);
    let all_equal = model.y.iter().all(|&v| v == model.y[0]);
    let lower_intercept = match (&model.prior.precision, intercept_only && n > 0 && all_equal) {
        (PriorPrecision::Isotropic { variance }, true) => {
            let var = var_beta1_quadrature(*variance, n)?;
            Some(lower_bound_intercept(*variance, n, var, epsilon))
        }
        _ => None,
    };
    Ok(BoundReport {
        n,
        p: model.p(),
        lam_max: cache.lam_max,
        lam_min: cache.lam_min,
        condition_number: 1.0 + cache.lam_max,
        kl_start_log,
        log_kl_over_eps: log_term,
        da_upper: da_mixing_bound(cache.lam_max, log_term),
        cg_upper: cg_mixing_bound(cache.lam_max, cache.lam_min, log_term),
        cg_refined_upper: cg_refined_bound(cache, log_term),
        lower_intercept,
        epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_cache, PriorSpec};
    use approx::assert_relative_eq;

    #[test]
    fn arithmetic_cases() {
        assert_eq!(da_mixing_bound(1.0, 1.0), 3.0);
        assert_eq!(da_mixing_bound(0.0, 2.5), 5.0);
        assert_eq!(cg_mixing_bound(3.0, 3.0, 1.7), 1.7);
        assert_eq!(cg_mixing_bound(3.0, 0.0, 1.0), 4.0);
        assert_eq!(recipe_bound(10.0), (22.0, 21.0));
        assert_eq!(random_design_limits(1.0, 1.0), (4.0, 0.0));
        assert_eq!(random_design_limits(1.0, 0.25), (2.25, 0.25));
    }

    #[test]
    fn start_bound_values() {
        assert_relative_eq!(prior_start_kl_log_bound(1, 0.0), 0.990_710_465_347_531_45, epsilon = 1e-14);
        assert_relative_eq!(prior_start_kl_log_bound(100, 1.0), 6.594_176_454_566_570_4, epsilon = 1e-13);
    }

    #[test]
    fn intercept_quadrature_oracle() {
        assert_relative_eq!(var_beta1_quadrature(1.0, 0).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(var_beta1_quadrature(1.0, 1).unwrap(), 0.681_690_113_816_209_33, max_relative = 1e-9);
        assert_relative_eq!(var_beta1_quadrature(1.0, 100).unwrap(), 0.184_017_987_359_381_26, max_relative = 1e-9);
        let (mean, _) = intercept_posterior_moments(0.0, 1.0, 100, 0).unwrap();
        assert_relative_eq!(mean, 2.511_148_227_515_477_9, max_relative = 1e-10);
        let (mean, var) = intercept_posterior_moments(0.0, 0.5, 100, 0).unwrap();
        assert_relative_eq!(mean, 2.190_022_537_606_929, max_relative = 1e-10);
        assert_relative_eq!(var, 0.098_797_203_246_725_102, max_relative = 1e-9);
        let (mean, var) = intercept_posterior_moments(0.0, 1.0, 50, 50).unwrap();
        assert!(mean.abs() < 1e-12);
        assert_relative_eq!(var, 0.015_486_231_919_001_366, max_relative = 1e-9);
    }

    #[test]
    fn lower_bound_formula() {
        assert_eq!(lower_bound_intercept(2.0, 10, 1.0 / 10.5, 0.1), 0.0);
        let a = lower_bound_intercept(1.0, 100, 0.1, 0.1);
        let b = lower_bound_intercept(1.0, 200, 0.1, 0.1);
        assert!(b > a);
    }

    #[test]
    fn identity_refined_factor_is_one() {
        let model = ProbitModel::new(
            DMatrix::identity(3, 3),
            vec![true, false, true],
            PriorSpec::new(PriorPrecision::Isotropic { variance: 1.0 }),
        )
        .unwrap();
        let cache = build_cache(&model).unwrap();
        assert_relative_eq!(cg_refined_factor(&cache), 1.0, epsilon = 1e-12);
        let report = bound_report(&model, &cache, 0.1).unwrap();
        assert!(report.lower_intercept.is_none());
        assert!(report.cg_refined_upper <= report.cg_upper * (1.0 + 1e-8));
    }

    #[test]
    fn report_has_intercept_lower_bound() {
        let model = ProbitModel::new(
            DMatrix::from_element(50, 1, 1.0),
            vec![true; 50],
            PriorSpec::new(PriorPrecision::Isotropic { variance: 1.0 }),
        )
        .unwrap();
        let cache = build_cache(&model).unwrap();
        let report = bound_report(&model, &cache, 0.1).unwrap();
        let expected = lower_bound_intercept(1.0, 50, 0.214_681_628_097_559_93, 0.1);
        assert_relative_eq!(report.lower_intercept.unwrap(), expected, max_relative = 1e-8);
        assert_relative_eq!(report.lam_max, 50.0, max_relative = 1e-12);
    }
}
