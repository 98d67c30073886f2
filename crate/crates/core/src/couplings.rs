//! Coupled kernels and lag-L meeting times.
//!
//! Two regimes: while the chains are further apart than `ε` they share random
//! numbers (inverse-CDF uniforms for the latent sites, Gaussian noise for `β`),
//! which contracts them; once closer, maximal couplings try to make every
//! coordinate bit-identical.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dist2;
use crate::model::{PosteriorCache, ProbitModel};
use crate::samplers::{
    apply_intercept_move, cg_conditional, normal_vector, refresh_b, refresh_eta, rwm_log_ratio, set_site,
    start_for, step, uniform, z_conditional, ChainState, Kernel, RwmConfig,
};
use crate::special::{truncnorm_logpdf, truncnorm_sample, TruncNormParams};

/// Rejection attempts allowed in a single maximal coupling before giving up.
pub const MAX_REJECTION_ATTEMPTS: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingConfig {
    pub epsilon: f64,
    pub lag: usize,
    pub max_sweeps: usize,
}

impl CouplingConfig {
    /// Defaults: `ε = 0.1` for DA-type kernels, `ε = 0.001` for CG.
    pub fn for_kernel(kernel: Kernel, lag: usize) -> Self {
        let epsilon = if kernel == Kernel::Cg { 1e-3 } else { 0.1 };
        Self {
            epsilon,
            lag,
            max_sweeps: 100_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || self.lag == 0 || self.max_sweeps == 0 {
            return Err(Error::InvalidArgument(
                "coupling needs epsilon > 0, lag >= 1 and max_sweeps >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoupledPair {
    pub state1: ChainState,
    pub state2: ChainState,
    pub met: bool,
}

impl CoupledPair {
    pub fn new(state1: ChainState, state2: ChainState) -> Self {
        let met = state1.z == state2.z && state1.beta == state2.beta;
        Self { state1, state2, met }
    }

    fn update_met(&mut self) {
        self.met = self.state1.z == self.state2.z && self.state1.beta == self.state2.beta;
    }

    /// Euclidean distance on `(z, β)`.
    pub fn distance(&self) -> f64 {
        (dist2(&self.state1.z, &self.state2.z) + dist2(&self.state1.beta, &self.state2.beta)).sqrt()
    }

    /// Euclidean distance on `z` alone.
    pub fn z_distance(&self) -> f64 {
        dist2(&self.state1.z, &self.state2.z).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeetingRecord {
    pub replicate: usize,
    pub seed: u64,
    #[serde(rename = "L")]
    pub lag: usize,
    pub tau: usize,
    pub censored: bool,
}

/// Maximal coupling of two truncated normals by rejection. Returns
/// `(x, y, met)` with `x == y` bit-exactly when `met`.
pub fn maximal_coupling_1d<R: Rng + ?Sized>(p: &TruncNormParams, q: &TruncNormParams, rng: &mut R) -> Result<(f64, f64, bool)> {
    let x = truncnorm_sample(p, uniform(rng));
    if uniform(rng).ln() + truncnorm_logpdf(p, x) <= truncnorm_logpdf(q, x) {
        return Ok((x, x, true));
    }
    for _ in 0..MAX_REJECTION_ATTEMPTS {
        let y = truncnorm_sample(q, uniform(rng));
        if uniform(rng).ln() + truncnorm_logpdf(q, y) > truncnorm_logpdf(p, y) {
            return Ok((x, y, false));
        }
    }
    Err(Error::CouplingCensored(MAX_REJECTION_ATTEMPTS))
}

/// Common-random-number coupling through the inverse CDF.
pub fn crn_coupling_1d(p: &TruncNormParams, q: &TruncNormParams, shared_u: f64) -> (f64, f64) {
    (truncnorm_sample(p, shared_u), truncnorm_sample(q, shared_u))
}

/// Reflection-maximal coupling of `N(mean1, LLᵀ)` and `N(mean2, LLᵀ)`.
pub fn reflection_maximal_gaussian<R: Rng + ?Sized>(
    mean1: &DVector<f64>,
    mean2: &DVector<f64>,
    chol: &DMatrix<f64>,
    rng: &mut R,
) -> (DVector<f64>, DVector<f64>, bool) {
    let xi = normal_vector(mean1.len(), rng);
    let x = mean1 + chol * &xi;
    let delta = chol
        .solve_lower_triangular(&(mean1 - mean2))
        .expect("covariance factor has a positive diagonal");
    let shifted = &xi + &delta;
    let log_ratio = 0.5 * (xi.norm_squared() - shifted.norm_squared());
    if uniform(rng).ln() <= log_ratio {
        return (x.clone(), x, true);
    }
    let e = &delta / delta.norm();
    let reflected = &xi - &e * (2.0 * e.dot(&xi));
    let y = mean2 + chol * reflected;
    (x, y, false)
}

fn couple_sites<R: Rng + ?Sized>(
    params1: &TruncNormParams,
    params2: &TruncNormParams,
    far: bool,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if far {
        Ok(crn_coupling_1d(params1, params2, uniform(rng)))
    } else {
        let (x, y, _) = maximal_coupling_1d(params1, params2, rng)?;
        Ok((x, y))
    }
}

fn coupled_z_given_eta<R: Rng + ?Sized>(pair: &mut CoupledPair, model: &ProbitModel, far: bool, rng: &mut R) -> Result<()> {
    for i in 0..model.n() {
        let p1 = z_conditional(model, i, pair.state1.eta[i]);
        let p2 = z_conditional(model, i, pair.state2.eta[i]);
        let (a, b) = couple_sites(&p1, &p2, far, rng)?;
        pair.state1.z[i] = a;
        pair.state2.z[i] = b;
    }
    Ok(())
}

fn coupled_beta_given_z<R: Rng + ?Sized>(
    pair: &mut CoupledPair,
    cache: &PosteriorCache,
    model: &ProbitModel,
    far: bool,
    rng: &mut R,
) {
    refresh_b(&mut pair.state1, cache);
    refresh_b(&mut pair.state2, cache);
    if far {
        let noise = &cache.chol_v * normal_vector(model.p(), rng);
        pair.state1.beta = &pair.state1.b + &noise;
        pair.state2.beta = &pair.state2.b + noise;
    } else {
        let (b1, b2, _) = reflection_maximal_gaussian(&pair.state1.b, &pair.state2.b, &cache.chol_v, rng);
        pair.state1.beta = b1;
        pair.state2.beta = b2;
    }
    refresh_eta(&mut pair.state1, model);
    refresh_eta(&mut pair.state2, model);
}

/// Coupled DA iteration.
pub fn coupled_da_step<R: Rng + ?Sized>(
    pair: &mut CoupledPair,
    cache: &PosteriorCache,
    model: &ProbitModel,
    cfg: &CouplingConfig,
    rng: &mut R,
) -> Result<()> {
    let far = pair.distance() > cfg.epsilon;
    coupled_z_given_eta(pair, model, far, rng)?;
    coupled_beta_given_z(pair, cache, model, far, rng);
    pair.update_met();
    Ok(())
}

/// Coupled CG sweep: shared site indices, regime fixed at the start of the sweep.
pub fn coupled_cg_sweep<R: Rng + ?Sized>(
    pair: &mut CoupledPair,
    cache: &PosteriorCache,
    model: &ProbitModel,
    cfg: &CouplingConfig,
    rng: &mut R,
) -> Result<()> {
    let n = model.n();
    let far = pair.z_distance() > cfg.epsilon;
    for _ in 0..n {
        let i = rng.random_range(0..n);
        let p1 = cg_conditional(&pair.state1, i, cache, model)?;
        let p2 = cg_conditional(&pair.state2, i, cache, model)?;
        let (a, b) = couple_sites(&p1, &p2, far, rng)?;
        set_site(&mut pair.state1, i, a, cache);
        set_site(&mut pair.state2, i, b, cache);
    }
    refresh_b(&mut pair.state1, cache);
    refresh_b(&mut pair.state2, cache);
    pair.update_met();
    Ok(())
}

/// Coupled modified DA iteration: `β | z`, intercept RWM, then `z | β`.
pub fn coupled_da_mod_step<R: Rng + ?Sized>(
    pair: &mut CoupledPair,
    cache: &PosteriorCache,
    model: &ProbitModel,
    cfg: &CouplingConfig,
    rwm: RwmConfig,
    rng: &mut R,
) -> Result<()> {
    let far = pair.distance() > cfg.epsilon;
    coupled_beta_given_z(pair, cache, model, far, rng);

    // Proposals are reflection-maximally coupled in both regimes: shared
    // increments leave the intercept gap unchanged whenever both chains make
    // the same accept decision, so they never contract that direction.
    let (cur1, cur2) = (pair.state1.beta[0], pair.state2.beta[0]);
    let sd = DMatrix::from_element(1, 1, rwm.sigma);
    let (a, b, _) = reflection_maximal_gaussian(
        &DVector::from_element(1, cur1),
        &DVector::from_element(1, cur2),
        &sd,
        rng,
    );
    let (prop1, prop2) = (a[0], b[0]);
    let log_u = uniform(rng).ln();
    if log_u < rwm_log_ratio(&pair.state1, prop1 - cur1, cache, model) {
        apply_intercept_move(&mut pair.state1, prop1, model);
    }
    if log_u < rwm_log_ratio(&pair.state2, prop2 - cur2, cache, model) {
        apply_intercept_move(&mut pair.state2, prop2, model);
    }

    coupled_z_given_eta(pair, model, far, rng)?;
    refresh_b(&mut pair.state1, cache);
    refresh_b(&mut pair.state2, cache);
    pair.update_met();
    Ok(())
}

/// Coupled z-marginal DA iteration; `η̃` is coupled like the `β` block.
pub fn coupled_da_marginal_step<R: Rng + ?Sized>(
    pair: &mut CoupledPair,
    cache: &PosteriorCache,
    model: &ProbitModel,
    cfg: &CouplingConfig,
    rng: &mut R,
) -> Result<()> {
    let chol_w = cache
        .chol_w
        .as_ref()
        .ok_or_else(|| Error::InvalidModel("W = XVXᵀ is not positive definite (needs p > n and full row rank)".into()))?;
    let far = pair.z_distance() > cfg.epsilon;
    let mean1 = crate::samplers::marginal_eta_mean(&pair.state1.z, cache, model);
    let mean2 = crate::samplers::marginal_eta_mean(&pair.state2.z, cache, model);
    if far {
        let noise = chol_w * normal_vector(model.n(), rng);
        pair.state1.eta = mean1 + &noise;
        pair.state2.eta = mean2 + noise;
    } else {
        let (e1, e2, _) = reflection_maximal_gaussian(&mean1, &mean2, chol_w, rng);
        pair.state1.eta = e1;
        pair.state2.eta = e2;
    }
    coupled_z_given_eta(pair, model, far, rng)?;
    refresh_b(&mut pair.state1, cache);
    refresh_b(&mut pair.state2, cache);
    pair.update_met();
    Ok(())
}

/// One coupled iteration for any kernel.
pub fn coupled_step<R: Rng + ?Sized>(
    kernel: Kernel,
    pair: &mut CoupledPair,
    cache: &PosteriorCache,
    model: &ProbitModel,
    cfg: &CouplingConfig,
    rwm: RwmConfig,
    rng: &mut R,
) -> Result<()> {
    match kernel {
        Kernel::Da => coupled_da_step(pair, cache, model, cfg, rng),
        Kernel::Cg => coupled_cg_sweep(pair, cache, model, cfg, rng),
        Kernel::DaMod => coupled_da_mod_step(pair, cache, model, cfg, rwm, rng),
        Kernel::DaMarginal => coupled_da_marginal_step(pair, cache, model, cfg, rng),
    }
}

/// Runs the coupled phase from states already lagged by `cfg.lag`:
/// `state1` is chain 1 after `L` solo steps, `state2` is chain 2 at time 0.
/// Returns `(tau, censored)`.
pub fn meeting_from_lagged<R: Rng + ?Sized>(
    kernel: Kernel,
    state1: ChainState,
    state2: ChainState,
    cache: &PosteriorCache,
    model: &ProbitModel,
    cfg: &CouplingConfig,
    rwm: RwmConfig,
    rng: &mut R,
) -> Result<(usize, bool)> {
    let mut pair = CoupledPair {
        state1,
        state2,
        met: false,
    };
    for k in 1..=cfg.max_sweeps {
        match coupled_step(kernel, &mut pair, cache, model, cfg, rwm, rng) {
            Ok(()) => {}
            Err(Error::CouplingCensored(_)) => return Ok((cfg.lag + k, true)),
            Err(e) => return Err(e),
        }
        if pair.met {
            return Ok((cfg.lag + k, false));
        }
    }
    Ok((cfg.lag + cfg.max_sweeps, true))
}

/// One lag-L meeting time from the prior start.
pub fn sample_meeting_time<R: Rng + ?Sized>(
    kernel: Kernel,
    model: &ProbitModel,
    cache: &PosteriorCache,
    cfg: &CouplingConfig,
    rwm: RwmConfig,
    rng: &mut R,
) -> Result<(usize, bool)> {
    cfg.validate()?;
    let mut state1 = start_for(kernel, cache, model, rng);
    let state2 = start_for(kernel, cache, model, rng);
    for _ in 0..cfg.lag {
        step(kernel, &mut state1, cache, model, rwm, rng)?;
    }
    meeting_from_lagged(kernel, state1, state2, cache, model, cfg, rwm, rng)
}
