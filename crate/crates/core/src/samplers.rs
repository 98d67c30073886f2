//! Markov kernels targeting the probit posterior: data augmentation (DA),
//! random-scan collapsed Gibbs (CG), DA with an intercept Metropolis move, and
//! the z-marginal DA chain for `p > n`.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{log_likelihood_from_eta, PosteriorCache, ProbitModel};
use crate::special::{truncnorm_sample, TruncNormParams};

#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub z: DVector<f64>,
    /// Empty for chains that do not track `β` (the z-marginal chain).
    pub beta: DVector<f64>,
    /// `Xβ`, or the sampled `η̃` for the z-marginal chain.
    pub eta: DVector<f64>,
    /// `V(Xᵀz + Q₀m)`
    pub b: DVector<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Da,
    Cg,
    DaMod,
    DaMarginal,
}

impl Kernel {
    pub fn name(self) -> &'static str {
        match self {
            Kernel::Da => "da",
            Kernel::Cg => "cg",
            Kernel::DaMod => "da_mod",
            Kernel::DaMarginal => "da_marginal",
        }
    }

    /// Whether `β` is part of the chain's state.
    pub fn tracks_beta(self) -> bool {
        matches!(self, Kernel::Da | Kernel::DaMod)
    }
}

impl std::fmt::Display for Kernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "da" => Ok(Kernel::Da),
            "cg" => Ok(Kernel::Cg),
            "da_mod" => Ok(Kernel::DaMod),
            "da_marginal" => Ok(Kernel::DaMarginal),
            other => Err(Error::InvalidArgument(format!("unknown kernel '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RwmConfig {
    pub sigma: f64,
}

impl Default for RwmConfig {
    fn default() -> Self {
        Self { sigma: 1.0 }
    }
}

impl RwmConfig {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("RWM sigma must be positive, got {sigma}")));
        }
        Ok(Self { sigma })
    }
}

pub(crate) fn uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(Open01)
}

pub(crate) fn normal_vector<R: Rng + ?Sized>(len: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// Conditional of `zᵢ` given the linear predictor.
pub fn z_conditional(model: &ProbitModel, i: usize, eta_i: f64) -> TruncNormParams {
    TruncNormParams::new(eta_i, 1.0, model.region(i))
}

/// Conditional of `zᵢ` given `z₋ᵢ` with `β` integrated out.
pub fn cg_conditional(state: &ChainState, i: usize, cache: &PosteriorCache, model: &ProbitModel) -> Result<TruncNormParams> {
    let hi = cache.leverage[i];
    if !(hi < 1.0) {
        return Err(Error::DegenerateLeverage { site: i, leverage: hi });
    }
    let one_minus = 1.0 - hi;
    let xb = cache.xt.column(i).dot(&state.b);
    let mean = (xb - hi * state.z[i]) / one_minus;
    Ok(TruncNormParams::new(mean, one_minus.recip().sqrt(), model.region(i)))
}

/// `V(Xᵀz + Q₀m)` recomputed from scratch.
pub fn b_from_z(z: &DVector<f64>, cache: &PosteriorCache) -> DVector<f64> {
    &cache.s * z + &cache.v_q0_m
}

pub fn refresh_b(state: &mut ChainState, cache: &PosteriorCache) {
    state.b = b_from_z(&state.z, cache);
}

pub fn refresh_eta(state: &mut ChainState, model: &ProbitModel) {
    state.eta = &model.x * &state.beta;
}

fn draw_z_given_eta<R: Rng + ?Sized>(state: &mut ChainState, model: &ProbitModel, rng: &mut R) {
    for i in 0..model.n() {
        state.z[i] = truncnorm_sample(&z_conditional(model, i, state.eta[i]), uniform(rng));
    }
}

fn draw_beta_given_z<R: Rng + ?Sized>(state: &mut ChainState, cache: &PosteriorCache, model: &ProbitModel, rng: &mut R) {
    refresh_b(state, cache);
    let xi = normal_vector(state.b.len(), rng);
    state.beta = &state.b + &cache.chol_v * xi;
    refresh_eta(state, model);
}

/// One DA iteration: `z | β`, then `β | z`.
pub fn da_step<R: Rng + ?Sized>(state: &mut ChainState, cache: &PosteriorCache, model: &ProbitModel, rng: &mut R) {
    draw_z_given_eta(state, model, rng);
    draw_beta_given_z(state, cache, model, rng);
}

/// Redraws site `i` from its collapsed conditional and updates `B` in O(p).
pub fn cg_site_step<R: Rng + ?Sized>(
    state: &mut ChainState,
    i: usize,
    cache: &PosteriorCache,
    model: &ProbitModel,
    rng: &mut R,
) -> Result<()> {
    let params = cg_conditional(state, i, cache, model)?;
    let new = truncnorm_sample(&params, uniform(rng));
    set_site(state, i, new, cache);
    Ok(())
}

pub(crate) fn set_site(state: &mut ChainState, i: usize, new: f64, cache: &PosteriorCache) {
    let delta = new - state.z[i];
    state.z[i] = new;
    state.b.axpy(delta, &cache.s.column(i), 1.0);
}

/// `n` random-scan CG site updates; `B` is resynchronized at the end.
pub fn cg_sweep<R: Rng + ?Sized>(state: &mut ChainState, cache: &PosteriorCache, model: &ProbitModel, rng: &mut R) -> Result<()> {
    let n = model.n();
    for _ in 0..n {
        let i = rng.random_range(0..n);
        cg_site_step(state, i, cache, model, rng)?;
    }
    refresh_b(state, cache);
    Ok(())
}

/// Log acceptance ratio of moving `β₁` by `delta`, given `η = Xβ`.
pub(crate) fn rwm_log_ratio(state: &ChainState, delta: f64, cache: &PosteriorCache, model: &ProbitModel) -> f64 {
    let shifted = &state.eta + model.x.column(0) * delta;
    cache.log_prior_shift(&state.beta, 0, delta) + log_likelihood_from_eta(model, &shifted)
        - log_likelihood_from_eta(model, &state.eta)
}

pub(crate) fn apply_intercept_move(state: &mut ChainState, proposal: f64, model: &ProbitModel) {
    state.beta[0] = proposal;
    refresh_eta(state, model);
}

/// One modified DA iteration: `β | z`, a random-walk Metropolis move on the
/// intercept `β₁`, then `z | β`. Returns whether the move was accepted.
pub fn da_mod_step<R: Rng + ?Sized>(
    state: &mut ChainState,
    cache: &PosteriorCache,
    model: &ProbitModel,
    rwm: RwmConfig,
    rng: &mut R,
) -> bool {
    draw_beta_given_z(state, cache, model, rng);
    let step: f64 = rng.sample(StandardNormal);
    let proposal = state.beta[0] + rwm.sigma * step;
    let log_ratio = rwm_log_ratio(state, proposal - state.beta[0], cache, model);
    let accepted = uniform(rng).ln() < log_ratio;
    if accepted {
        apply_intercept_move(state, proposal, model);
    }
    draw_z_given_eta(state, model, rng);
    refresh_b(state, cache);
    accepted
}

/// Mean of `η̃ | z`, namely `XVQ₀m + Wz`.
pub fn marginal_eta_mean(z: &DVector<f64>, cache: &PosteriorCache, model: &ProbitModel) -> DVector<f64> {
    &cache.x_v_q0_m + &model.x * (&cache.s * z)
}

/// One iteration of the z-marginal DA chain: `η̃ ~ N(XVQ₀m + Wz, W)`, then `z | η̃`.
pub fn da_marginal_step<R: Rng + ?Sized>(
    state: &mut ChainState,
    cache: &PosteriorCache,
    model: &ProbitModel,
    rng: &mut R,
) -> Result<()> {
    let chol_w = cache
        .chol_w
        .as_ref()
        .ok_or_else(|| Error::InvalidModel("W = XVXᵀ is not positive definite (needs p > n and full row rank)".into()))?;
    let xi = normal_vector(model.n(), rng);
    state.eta = marginal_eta_mean(&state.z, cache, model) + chol_w * xi;
    draw_z_given_eta(state, model, rng);
    refresh_b(state, cache);
    Ok(())
}

/// `β` from the prior, `z | β`, caches refreshed.
pub fn sample_prior_start<R: Rng + ?Sized>(cache: &PosteriorCache, model: &ProbitModel, rng: &mut R) -> ChainState {
    let p = model.p();
    let beta = &cache.prior_mean + &cache.prior_cov_chol * normal_vector(p, rng);
    let mut state = ChainState {
        z: DVector::zeros(model.n()),
        eta: &model.x * &beta,
        beta,
        b: DVector::zeros(p),
    };
    draw_z_given_eta(&mut state, model, rng);
    refresh_b(&mut state, cache);
    state
}

/// Prior start adapted to the state layout of `kernel`.
pub fn start_for<R: Rng + ?Sized>(kernel: Kernel, cache: &PosteriorCache, model: &ProbitModel, rng: &mut R) -> ChainState {
    let mut state = sample_prior_start(cache, model, rng);
    if !kernel.tracks_beta() {
        state.beta = DVector::zeros(0);
    }
    state
}

/// Exact posterior draw by rejection from prior × indicator; only practical
/// for a handful of observations.
pub fn exact_posterior_draw<R: Rng + ?Sized>(
    cache: &PosteriorCache,
    model: &ProbitModel,
    max_tries: usize,
    rng: &mut R,
) -> Option<ChainState> {
    let p = model.p();
    for _ in 0..max_tries {
        let beta = &cache.prior_mean + &cache.prior_cov_chol * normal_vector(p, rng);
        let eta = &model.x * &beta;
        let z = &eta + normal_vector(model.n(), rng);
        if (0..model.n()).all(|i| model.region(i).contains(z[i])) {
            let b = b_from_z(&z, cache);
            return Some(ChainState { z, beta, eta, b });
        }
    }
    None
}

/// Applies one kernel iteration (one sweep for CG).
pub fn step<R: Rng + ?Sized>(
    kernel: Kernel,
    state: &mut ChainState,
    cache: &PosteriorCache,
    model: &ProbitModel,
    rwm: RwmConfig,
    rng: &mut R,
) -> Result<()> {
    match kernel {
        Kernel::Da => da_step(state, cache, model, rng),
        Kernel::Cg => cg_sweep(state, cache, model, rng)?,
        Kernel::DaMod => {
            da_mod_step(state, cache, model, rwm, rng);
        }
        Kernel::DaMarginal => da_marginal_step(state, cache, model, rng)?,
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSettings {
    pub iterations: usize,
    #[serde(default)]
    pub burn_in: usize,
    #[serde(default = "one")]
    pub thin: usize,
}

fn one() -> usize {
    1
}

/// Retained states of a single chain, plus the RWM acceptance rate when the
/// kernel has a Metropolis move.
#[derive(Clone, Debug)]
pub struct ChainRun {
    pub draws: Vec<ChainState>,
    pub acceptance_rate: Option<f64>,
}

/// Runs one chain from `start`, keeping every `thin`-th state after `burn_in`.
pub fn run_chain<R: Rng + ?Sized>(
    kernel: Kernel,
    mut state: ChainState,
    cache: &PosteriorCache,
    model: &ProbitModel,
    rwm: RwmConfig,
    settings: RunSettings,
    rng: &mut R,
) -> Result<ChainRun> {
    if settings.thin == 0 {
        return Err(Error::InvalidArgument("thin must be at least 1".into()));
    }
    let mut draws = Vec::new();
    let mut accepted = 0usize;
    for it in 0..settings.burn_in + settings.iterations {
        if kernel == Kernel::DaMod {
            accepted += usize::from(da_mod_step(&mut state, cache, model, rwm, rng));
        } else {
            step(kernel, &mut state, cache, model, rwm, rng)?;
        }
        if it >= settings.burn_in && (it - settings.burn_in).is_multiple_of(settings.thin) {
            draws.push(state.clone());
        }
    }
    let total = settings.burn_in + settings.iterations;
    let acceptance_rate = (kernel == Kernel::DaMod && total > 0).then(|| accepted as f64 / total as f64);
    if let Some(rate) = acceptance_rate {
        log::info!("intercept RWM acceptance rate {rate:.3}");
    }
    Ok(ChainRun { draws, acceptance_rate })
}
