//! Probit model container and the one-time factorization cache shared by all
//! samplers, couplings and bounds.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, eigen_extremes, inverse_from_cholesky, spd_inverse, symmetrize};
use crate::special::{h, h_prime, HalfLine};

/// Form of the prior covariance `Q₀⁻¹`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorPrecision {
    /// `Q₀⁻¹ = c·I`.
    Isotropic { variance: f64 },
    /// `Q₀⁻¹ = (c/p)·I`.
    ScaledIsotropic { c: f64 },
    /// `Q₀⁻¹ = (XᵀX/g + c·I)⁻¹`; `c = 0` needs `XᵀX` invertible.
    GPrior { g: f64, c: f64 },
    /// `Q₀⁻¹ = b/(p+n)·I`.
    Recipe { b: f64 },
    /// Arbitrary symmetric positive definite precision `Q₀`, row-major.
    GeneralSpd { precision: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    /// Prior mean; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    #[serde(flatten)]
    pub precision: PriorPrecision,
}

impl PriorSpec {
    pub fn new(precision: PriorPrecision) -> Self {
        Self {
            mean: None,
            precision,
        }
    }

    pub fn with_mean(mut self, mean: Vec<f64>) -> Self {
        self.mean = Some(mean);
        self
    }

    fn validate(&self, p: usize) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidModel(msg.to_string()));
        match &self.precision {
            PriorPrecision::Isotropic { variance: c } | PriorPrecision::ScaledIsotropic { c } => {
                if !(*c > 0.0 && c.is_finite()) {
                    return bad("prior variance must be positive");
                }
            }
            PriorPrecision::GPrior { g, c } => {
                if !(*g > 0.0 && g.is_finite()) || !(*c >= 0.0 && c.is_finite()) {
                    return bad("g prior needs g > 0 and c >= 0");
                }
            }
            PriorPrecision::Recipe { b } => {
                if !(*b > 0.0 && b.is_finite()) {
                    return bad("recipe prior needs b > 0");
                }
            }
            PriorPrecision::GeneralSpd { precision } => {
                if precision.len() != p || precision.iter().any(|r| r.len() != p) {
                    return bad("general precision must be p x p");
                }
            }
        }
        if let Some(m) = &self.mean {
            if m.len() != p || m.iter().any(|v| !v.is_finite()) {
                return bad("prior mean must be a finite vector of length p");
            }
        }
        Ok(())
    }

    pub fn mean_vector(&self, p: usize) -> DVector<f64> {
        match &self.mean {
            Some(m) => DVector::from_column_slice(m),
            None => DVector::zeros(p),
        }
    }

    /// Realized `(Q₀, Q₀⁻¹)` for a given design.
    pub fn matrices(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let (n, p) = x.shape();
        let iso = |var: f64| {
            (
                DMatrix::from_diagonal_element(p, p, 1.0 / var),
                DMatrix::from_diagonal_element(p, p, var),
            )
        };
        Ok(match &self.precision {
            PriorPrecision::Isotropic { variance } => iso(*variance),
            PriorPrecision::ScaledIsotropic { c } => iso(c / p as f64),
            PriorPrecision::Recipe { b } => iso(b / (p + n) as f64),
            PriorPrecision::GPrior { g, c } => {
                let mut q0 = x.transpose() * x / *g;
                for j in 0..p {
                    q0[(j, j)] += c;
                }
                let q0 = symmetrize(q0);
                let cov = spd_inverse(&q0)?;
                (q0, cov)
            }
            PriorPrecision::GeneralSpd { precision } => {
                let q0 = DMatrix::from_fn(p, p, |i, j| precision[i][j]);
                let cov = spd_inverse(&q0)?;
                (q0, cov)
            }
        })
    }
}

#[derive(Clone, Debug)]
pub struct ProbitModel {
    pub x: DMatrix<f64>,
    pub y: Vec<bool>,
    pub prior: PriorSpec,
}

impl ProbitModel {
    pub fn new(x: DMatrix<f64>, y: Vec<bool>, prior: PriorSpec) -> Result<Self> {
        let (n, p) = x.shape();
        if p == 0 {
            return Err(Error::InvalidModel("design needs at least one column".into()));
        }
        if y.len() != n {
            return Err(Error::InvalidModel(format!("{} responses for {} rows", y.len(), n)));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("design has non-finite entries".into()));
        }
        prior.validate(p)?;
        Ok(Self { x, y, prior })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn region(&self, i: usize) -> HalfLine {
        HalfLine::from_response(self.y[i])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// `n ≥ p`: factorize `XᵀX + Q₀` directly.
    Tall,
    /// `p > n`: Woodbury through the `n × n` system.
    Wide,
}

/// Immutable precomputations for a model. Shared read-only across chains.
#[derive(Clone, Debug)]
pub struct PosteriorCache {
    pub strategy: Strategy,
    pub prior_mean: DVector<f64>,
    /// `Q₀`
    pub prior_precision: DMatrix<f64>,
    /// Lower factor of `Q₀⁻¹`.
    pub prior_cov_chol: DMatrix<f64>,
    /// `V = (XᵀX + Q₀)⁻¹`
    pub v: DMatrix<f64>,
    pub chol_v: DMatrix<f64>,
    /// `S = VXᵀ`, column `i` is `V xᵢ`.
    pub s: DMatrix<f64>,
    /// `Xᵀ`, column `i` is `xᵢ`.
    pub xt: DMatrix<f64>,
    /// Leverages `hᵢ = xᵢᵀ V xᵢ`.
    pub leverage: DVector<f64>,
    /// `Q = I - XVXᵀ = (I + M)⁻¹`.
    pub q: DMatrix<f64>,
    /// Lower factor of `W = XVXᵀ`, wide path only.
    pub chol_w: Option<DMatrix<f64>>,
    /// `V Q₀ m`
    pub v_q0_m: DVector<f64>,
    /// `X V Q₀ m`
    pub x_v_q0_m: DVector<f64>,
    pub lam_max: f64,
    pub lam_min: f64,
}

/// Precomputes every factorization the samplers need.
pub fn build_cache(model: &ProbitModel) -> Result<PosteriorCache> {
    let x = &model.x;
    let (n, p) = x.shape();
    let (q0, q0_inv) = model.prior.matrices(x)?;
    let m = model.prior.mean_vector(p);
    let xt = x.transpose();
    let prior_cov_chol = cholesky(&q0_inv)?;

    let strategy = if n >= p { Strategy::Tall } else { Strategy::Wide };
    let v = match strategy {
        Strategy::Tall => {
            let a = symmetrize(&xt * x + &q0);
            inverse_from_cholesky(&cholesky(&a)?)
        }
        Strategy::Wide => {
            let cov_xt = &q0_inv * &xt;
            let mut k = x * &cov_xt;
            for i in 0..n {
                k[(i, i)] += 1.0;
            }
            let k_inv = spd_inverse(&symmetrize(k))?;
            symmetrize(&q0_inv - &cov_xt * k_inv * cov_xt.transpose())
        }
    };
    let chol_v = cholesky(&v)?;
    let s = &v * &xt;
    let leverage = DVector::from_fn(n, |i, _| xt.column(i).dot(&s.column(i)));
    if let Some((i, hi)) = leverage.iter().enumerate().find(|(_, hi)| !(**hi < 1.0)) {
        return Err(Error::DegenerateLeverage { site: i, leverage: *hi });
    }
    let w = symmetrize(x * &s);
    let mut q = -&w;
    for i in 0..n {
        q[(i, i)] = 1.0 - leverage[i];
    }
    let chol_w = match strategy {
        Strategy::Wide => cholesky(&w).ok(),
        Strategy::Tall => None,
    };
    let v_q0_m = &v * (&q0 * &m);
    let x_v_q0_m = x * &v_q0_m;

    let (lam_min, lam_max) = if n <= p {
        let mm = symmetrize(x * &q0_inv * &xt);
        let (lo, hi) = eigen_extremes(&mm);
        (lo.max(0.0), hi.max(0.0))
    } else {
        let g = symmetrize(prior_cov_chol.transpose() * &xt * x * &prior_cov_chol);
        let (_, hi) = eigen_extremes(&g);
        (0.0, hi.max(0.0))
    };

    Ok(PosteriorCache {
        strategy,
        prior_mean: m,
        prior_precision: q0,
        prior_cov_chol,
        v,
        chol_v,
        s,
        xt,
        leverage,
        q,
        chol_w,
        v_q0_m,
        x_v_q0_m,
        lam_max,
        lam_min,
    })
}

impl PosteriorCache {
    /// `M = X Q₀⁻¹ Xᵀ`, built on demand.
    pub fn m_matrix(&self) -> DMatrix<f64> {
        let lt_xt = self.prior_cov_chol.transpose() * &self.xt;
        symmetrize(lt_xt.transpose() * lt_xt)
    }

    /// `W = XVXᵀ = I - Q`.
    pub fn w_matrix(&self) -> DMatrix<f64> {
        let n = self.q.nrows();
        DMatrix::identity(n, n) - &self.q
    }

    /// `-(β-m)ᵀQ₀(β-m)/2`
    pub fn log_prior_kernel(&self, beta: &DVector<f64>) -> f64 {
        let d = beta - &self.prior_mean;
        -0.5 * d.dot(&(&self.prior_precision * &d))
    }

    /// Change in the log prior kernel when `β_j` moves by `delta`.
    pub fn log_prior_shift(&self, beta: &DVector<f64>, j: usize, delta: f64) -> f64 {
        let d = beta - &self.prior_mean;
        let row = self.prior_precision.column(j).dot(&d);
        -(delta * row + 0.5 * delta * delta * self.prior_precision[(j, j)])
    }
}

/// Log-likelihood part `-Σ h(sᵢ ηᵢ)` given the linear predictor.
pub fn log_likelihood_from_eta(model: &ProbitModel, eta: &DVector<f64>) -> f64 {
    -eta
        .iter()
        .enumerate()
        .map(|(i, &e)| h(model.region(i).sign() * e))
        .sum::<f64>()
}

/// `log π(β)` up to an additive constant.
pub fn log_posterior_beta(model: &ProbitModel, cache: &PosteriorCache, beta: &DVector<f64>) -> f64 {
    let eta = &model.x * beta;
    cache.log_prior_kernel(beta) + log_likelihood_from_eta(model, &eta)
}

/// Gradient of [`log_posterior_beta`].
pub fn grad_log_posterior_beta(model: &ProbitModel, cache: &PosteriorCache, beta: &DVector<f64>) -> DVector<f64> {
    let eta = &model.x * beta;
    let weights = DVector::from_fn(model.n(), |i, _| {
        let s = model.region(i).sign();
        -s * h_prime(s * eta[i])
    });
    -(&cache.prior_precision * (beta - &cache.prior_mean)) + model.x.transpose() * weights
}

/// Bound `1 + λ_max(M)` on the condition number of the prior-preconditioned
/// potential.
pub fn condition_number_bound(cache: &PosteriorCache) -> f64 {
    1.0 + cache.lam_max
}
