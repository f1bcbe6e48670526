//! Seeded random streams.
//!
//! Every trial draws from its own ChaCha stream selected by the trial index,
//! so outcomes do not depend on how trials are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TrialRng = ChaCha8Rng;

/// Stream reserved for calibration runs (attenuation estimates).
pub const CALIBRATION_STREAM: u64 = u64::MAX;

pub fn stream(seed: u64, index: u64) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn calibration(seed: u64) -> TrialRng {
    stream(seed, CALIBRATION_STREAM)
}

/// Stream for block `block` of calibration stage `stage` (a chance, a pass).
///
/// Stages get distinct keys and blocks count down from [`CALIBRATION_STREAM`],
/// far away from the trial indices used by [`stream`].
pub fn calibration_block(seed: u64, stage: u64, block: u64) -> TrialRng {
    let key = splitmix64(seed ^ splitmix64(stage.wrapping_add(1)));
    stream(key, CALIBRATION_STREAM - block)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
