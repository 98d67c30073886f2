//! Statistical helpers shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use probit_mixing::couplings::{coupled_step, CouplingConfig, CoupledPair};
use probit_mixing::model::{build_cache, PosteriorCache, PriorPrecision, PriorSpec, ProbitModel};
use probit_mixing::samplers::{b_from_z, start_for, step, ChainState, Kernel, RwmConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Asymptotic Kolmogorov survival function `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let k = f64::from(k);
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * x * x).exp();
        s += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    s.clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let en = (n * m / (n + m)).sqrt();
    (d, kolmogorov_sf((en + 0.12 + 0.11 / en) * d))
}

/// One-sample KS test against a continuous CDF.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d = 0f64;
    for (k, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max((k as f64 + 1.0) / n - f).max(f - k as f64 / n);
    }
    let en = n.sqrt();
    (d, kolmogorov_sf((en + 0.12 + 0.11 / en) * d))
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

/// Batch-means standard error of the mean of a correlated series.
pub fn batch_means_se(x: &[f64], batches: usize) -> f64 {
    let size = x.len() / batches;
    let means: Vec<f64> = (0..batches).map(|b| mean(&x[b * size..(b + 1) * size])).collect();
    (variance(&means) / batches as f64).sqrt()
}

pub fn intercept_only(n: usize, ones: usize, variance: f64) -> ProbitModel {
    let x = DMatrix::from_element(n, 1, 1.0);
    let y = (0..n).map(|i| i < ones).collect();
    ProbitModel::new(x, y, PriorSpec::new(PriorPrecision::Isotropic { variance })).unwrap()
}

pub fn gaussian_matrix<R: Rng>(n: usize, p: usize, scale: f64, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn random_model<R: Rng>(n: usize, p: usize, prior: PriorPrecision, rng: &mut R) -> ProbitModel {
    let x = gaussian_matrix(n, p, 1.0 / (p as f64).sqrt(), rng);
    let y = (0..n).map(|_| rng.random_bool(0.5)).collect();
    ProbitModel::new(x, y, PriorSpec::new(prior)).unwrap()
}

pub fn column(x: &[DVector<f64>], j: usize) -> Vec<f64> {
    x.iter().map(|v| v[j]).collect()
}

/// Holm step-down correction: true when every hypothesis survives at `alpha`.
pub fn holm_accepts_all(p_values: &[f64], alpha: f64) -> bool {
    let mut p = p_values.to_vec();
    p.sort_by(f64::total_cmp);
    let m = p.len();
    p.iter().enumerate().all(|(k, &pk)| pk > alpha / (m - k) as f64)
}

pub fn test_model() -> (ProbitModel, PosteriorCache) {
    let x = DMatrix::from_row_slice(
        5,
        3,
        &[1.0, 0.3, -0.5, 1.0, -1.2, 0.4, 1.0, 0.8, 0.9, 1.0, 0.1, -0.7, 1.0, -0.4, 0.2],
    );
    let prior = PriorSpec::new(PriorPrecision::Isotropic { variance: 2.0 });
    let model = ProbitModel::new(x, vec![true, false, true, true, false], prior).unwrap();
    let cache = build_cache(&model).unwrap();
    (model, cache)
}

pub fn wide_test_model() -> (ProbitModel, PosteriorCache) {
    let x = DMatrix::from_row_slice(3, 4, &[0.5, -0.2, 0.9, 0.1, -0.3, 0.8, 0.2, -0.6, 0.7, 0.1, -0.5, 0.4]);
    let prior = PriorSpec::new(PriorPrecision::Isotropic { variance: 1.5 });
    let model = ProbitModel::new(x, vec![true, false, true], prior).unwrap();
    let cache = build_cache(&model).unwrap();
    (model, cache)
}

fn nudge(state: &ChainState, model: &ProbitModel, cache: &PosteriorCache, size: f64) -> ChainState {
    let mut s = state.clone();
    for i in 0..s.z.len() {
        let moved = s.z[i] * (1.0 + size);
        if model.region(i).contains(moved) {
            s.z[i] = moved;
        }
    }
    s.b = b_from_z(&s.z, cache);
    if !s.beta.is_empty() {
        s.beta.iter_mut().for_each(|b| *b += size);
        s.eta = &model.x * &s.beta;
    }
    s
}

/// After `steps` coupled iterations each chain must be distributed exactly as
/// an uncoupled chain from the same start.
pub fn marginals_faithful(kernel: Kernel, model: &ProbitModel, cache: &PosteriorCache, nudge_size: Option<f64>, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = start_for(kernel, cache, model, &mut rng);
    let b = match nudge_size {
        Some(size) => nudge(&a, model, cache, size),
        None => start_for(kernel, cache, model, &mut rng),
    };
    let cfg = CouplingConfig::for_kernel(kernel, 1);
    let rwm = RwmConfig::default();
    let reps = 1500;
    let steps = 2;
    let mut coupled = (Vec::new(), Vec::new());
    let mut solo = (Vec::new(), Vec::new());
    for _ in 0..reps {
        let mut pair = CoupledPair::new(a.clone(), b.clone());
        for _ in 0..steps {
            coupled_step(kernel, &mut pair, cache, model, &cfg, rwm, &mut rng).unwrap();
        }
        coupled.0.push(pair.state1);
        coupled.1.push(pair.state2);
        let mut s1 = a.clone();
        let mut s2 = b.clone();
        for _ in 0..steps {
            step(kernel, &mut s1, cache, model, rwm, &mut rng).unwrap();
            step(kernel, &mut s2, cache, model, rwm, &mut rng).unwrap();
        }
        solo.0.push(s1);
        solo.1.push(s2);
    }
    let coord = |states: &[ChainState], k: usize| -> Vec<f64> {
        states
            .iter()
            .map(|s| if k < s.z.len() { s.z[k] } else { s.beta[k - s.z.len()] })
            .collect()
    };
    let dims = a.z.len() + a.beta.len();
    let mut p = Vec::new();
    for k in 0..dims {
        p.push(ks_two_sample(&coord(&coupled.0, k), &coord(&solo.0, k)).1);
        p.push(ks_two_sample(&coord(&coupled.1, k), &coord(&solo.1, k)).1);
    }
    p
}
