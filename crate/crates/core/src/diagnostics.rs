//! Total-variation upper bounds from lag-L meeting times.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::couplings::MeetingRecord;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TVBoundCurve {
    pub t_grid: Vec<usize>,
    pub dbar: Vec<f64>,
    pub se: Vec<f64>,
    pub n_used: usize,
    pub n_censored: usize,
    pub lag: usize,
}

/// `max{0, ⌈(τ - L - t)/L⌉}` in integer arithmetic.
pub fn tv_term(tau: usize, lag: usize, t: usize) -> usize {
    let excess = tau.saturating_sub(lag + t);
    excess.div_ceil(lag)
}

fn uncensored(records: &[MeetingRecord]) -> Result<(Vec<usize>, usize, usize)> {
    let lag = records
        .first()
        .ok_or_else(|| Error::Records("no meeting records".into()))?
        .lag;
    if records.iter().any(|r| r.lag != lag) {
        return Err(Error::Records("records mix different lags".into()));
    }
    let taus: Vec<usize> = records.iter().filter(|r| !r.censored).map(|r| r.tau).collect();
    let n_censored = records.len() - taus.len();
    if taus.is_empty() {
        return Err(Error::Records("every record is censored".into()));
    }
    if n_censored > 0 {
        log::warn!(
            "{n_censored} of {} meeting times censored and excluded; the TV bound is biased low",
            records.len()
        );
    }
    Ok((taus, lag, n_censored))
}

/// Default grid `1..=max(1, max τ - L)`.
pub fn default_grid(records: &[MeetingRecord]) -> Vec<usize> {
    let last = records
        .iter()
        .filter(|r| !r.censored)
        .map(|r| r.tau.saturating_sub(r.lag))
        .max()
        .unwrap_or(1)
        .max(1);
    (1..=last).collect()
}

/// Empirical `d̄(t)` over un-censored records with plug-in standard errors.
pub fn tv_bound_curve(records: &[MeetingRecord], t_grid: Option<Vec<usize>>) -> Result<TVBoundCurve> {
    let (taus, lag, n_censored) = uncensored(records)?;
    let t_grid = t_grid.unwrap_or_else(|| default_grid(records));
    if t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("t grid must be strictly increasing".into()));
    }
    let n = taus.len() as f64;
    let mut dbar = Vec::with_capacity(t_grid.len());
    let mut se = Vec::with_capacity(t_grid.len());
    for &t in &t_grid {
        let (mut s1, mut s2) = (0u128, 0u128);
        for &tau in &taus {
            let v = tv_term(tau, lag, t) as u128;
            s1 += v;
            s2 += v * v;
        }
        let mean = s1 as f64 / n;
        let var = if taus.len() > 1 {
            ((s2 as f64 - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        dbar.push(mean);
        se.push((var / n).sqrt());
    }
    Ok(TVBoundCurve {
        t_grid,
        dbar,
        se,
        n_used: taus.len(),
        n_censored,
        lag,
    })
}

/// Smallest grid point with `d̄(t) ≤ ε`.
pub fn tv_mixing_time_upper(curve: &TVBoundCurve, epsilon: f64) -> Result<usize> {
    curve
        .t_grid
        .iter()
        .zip(&curve.dbar)
        .find(|(_, &d)| d <= epsilon)
        .map(|(&t, _)| t)
        .ok_or(Error::GridExhausted {
            epsilon,
            last: curve.t_grid.last().copied().unwrap_or(0),
        })
}

/// Mixing-time upper bound straight from records on the default grid.
pub fn t_mix_from_records(records: &[MeetingRecord], epsilon: f64) -> Result<usize> {
    let (taus, lag, _) = uncensored(records)?;
    let n = taus.len();
    let last = taus.iter().map(|t| t.saturating_sub(lag)).max().unwrap_or(1).max(1);
    let threshold = epsilon * n as f64;
    for t in 1..=last {
        let total: usize = taus.iter().map(|&tau| tv_term(tau, lag, t)).sum();
        if total as f64 <= threshold {
            return Ok(t);
        }
    }
    Err(Error::GridExhausted { epsilon, last })
}

/// Bootstrap standard error of the mixing-time estimate, resampling records
/// with a fixed seed.
pub fn t_mix_bootstrap_se(records: &[MeetingRecord], epsilon: f64, resamples: usize, seed: u64) -> Result<f64> {
    let (taus, lag, _) = uncensored(records)?;
    if resamples < 2 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(resamples);
    let mut sample = Vec::with_capacity(taus.len());
    for _ in 0..resamples {
        sample.clear();
        sample.extend((0..taus.len()).map(|_| MeetingRecord {
            replicate: 0,
            seed: 0,
            lag,
            tau: taus[rng.random_range(0..taus.len())],
            censored: false,
        }));
        values.push(t_mix_from_records(&sample, epsilon)? as f64);
    }
    let mean = values.iter().sum::<f64>() / resamples as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (resamples - 1) as f64;
    Ok(var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingSummary {
    pub epsilon: f64,
    pub t_mix_upper: usize,
    pub t_mix_se: f64,
    pub n_used: usize,
    pub n_censored: usize,
    #[serde(rename = "L")]
    pub lag: usize,
}

pub fn summarize(curve: &TVBoundCurve, records: &[MeetingRecord], epsilon: f64, seed: u64) -> Result<MixingSummary> {
    Ok(MixingSummary {
        epsilon,
        t_mix_upper: tv_mixing_time_upper(curve, epsilon)?,
        t_mix_se: t_mix_bootstrap_se(records, epsilon, 200, seed)?,
        n_used: curve.n_used,
        n_censored: curve.n_censored,
        lag: curve.lag,
    })
}
