//! Deterministic random streams.
//!
//! Every stream is a ChaCha20 keystream keyed by the master seed. The
//! ChaCha stream id selects the trial and the consumer inside the trial, so
//! the environment, the network initialisation and the policy never share
//! draws. Changing how many numbers one consumer takes leaves the others
//! untouched, which keeps different algorithms on the same trial facing the
//! exact same contexts and noise.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type SeededRng = ChaCha20Rng;

/// Consumer of a per-trial stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Environment = 0,
    Init = 1,
    Policy = 2,
    /// Free for tests and diagnostics.
    Auxiliary = 3,
}

/// Stream `trial * 256 + purpose` of the keystream keyed by `master_seed`.
pub fn trial_rng(master_seed: u64, trial: u64, purpose: Purpose) -> SeededRng {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream((trial << 8) | purpose as u64);
    rng
}

/// Plain seeded generator for tests and one-off tools.
pub fn seeded(seed: u64) -> SeededRng {
    ChaCha20Rng::seed_from_u64(seed)
}
