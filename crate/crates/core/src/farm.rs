//! Parallel replicate simulation with per-replicate random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::couplings::{sample_meeting_time, CouplingConfig, MeetingRecord};
use crate::error::Result;
use crate::model::{PosteriorCache, ProbitModel};
use crate::samplers::{Kernel, RwmConfig};

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of replicate `index` in stream `stream`; a pure function of its
/// arguments, so results do not depend on scheduling.
pub fn replicate_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(stream)).wrapping_add(index))
}

/// Stable stream id for a label, e.g. a table cell name.
pub fn stream_id(label: &str) -> u64 {
    label
        .bytes()
        .fold(0xCBF2_9CE4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01B3))
}

pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `replicates` independent meeting times, run on the current rayon pool.
pub fn run_meeting_times(
    kernel: Kernel,
    model: &ProbitModel,
    cache: &PosteriorCache,
    cfg: &CouplingConfig,
    rwm: RwmConfig,
    replicates: usize,
    master_seed: u64,
    stream: u64,
) -> Result<Vec<MeetingRecord>> {
    cfg.validate()?;
    (0..replicates)
        .into_par_iter()
        .map(|replicate| {
            let seed = replicate_seed(master_seed, stream, replicate as u64);
            let mut rng = rng_for(seed);
            let (tau, censored) = sample_meeting_time(kernel, model, cache, cfg, rwm, &mut rng)?;
            Ok(MeetingRecord {
                replicate,
                seed,
                lag: cfg.lag,
                tau,
                censored,
            })
        })
        .collect()
}
