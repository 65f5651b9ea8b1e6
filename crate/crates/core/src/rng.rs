//! Seed derivation and the independent random streams used by a trial.
//!
//! Every trial owns one seed. From it we derive one ChaCha stream per DOPO for
//! the homodyne record and one per DOPO for particle diffusion and resampling.
//! Nothing is shared between workers, so results depend only on the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const RECORD_DOMAIN: u64 = 0x6d65_6173_7572_6521;
const PARTICLE_DOMAIN: u64 = 0x7061_7274_6963_6c65;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trial `trial` at sweep point `sweep_value`: `base ⊕ hash(value, trial)`.
pub fn trial_seed(base: u64, sweep_value: f64, trial: u64) -> u64 {
    base ^ splitmix64(splitmix64(sweep_value.to_bits()) ^ trial)
}

fn stream_rng(seed: u64, domain: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ domain));
    rng.set_stream(index as u64);
    rng
}

/// Per-DOPO standard-normal source for the measurement record.
#[derive(Debug, Clone)]
pub struct RecordStream {
    streams: Vec<ChaCha8Rng>,
}

impl RecordStream {
    pub fn new(seed: u64, n: usize) -> Self {
        RecordStream {
            streams: (0..n).map(|i| stream_rng(seed, RECORD_DOMAIN, i)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }

    /// One standard normal per DOPO.
    pub fn next_normals(&mut self) -> Vec<f64> {
        self.streams.iter_mut().map(|r| r.sample(StandardNormal)).collect()
    }

    /// One `N(0, dt)` increment per DOPO.
    pub fn next_increments(&mut self, dt: f64) -> Vec<f64> {
        let s = dt.sqrt();
        self.streams
            .iter_mut()
            .map(|r| s * r.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

/// Independent generators for particle diffusion, one per DOPO.
pub fn particle_streams(seed: u64, n: usize) -> Vec<ChaCha8Rng> {
    (0..n).map(|i| stream_rng(seed, PARTICLE_DOMAIN, i)).collect()
}

/// A general-purpose generator for tests and checks.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
