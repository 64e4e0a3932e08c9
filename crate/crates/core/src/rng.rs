//! Seed derivation. Every stochastic component draws from its own ChaCha
//! stream so that, for example, changing the number of noise draws never
//! shifts the SNR draws.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Independent random streams derived from one experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Pairs = 2,
    Split = 3,
    Shuffle = 4,
    Snr = 5,
    Noise = 6,
    Validation = 7,
    Evaluation = 8,
    Synthetic = 9,
}

/// Generator for `stream` under `seed`, optionally further keyed by `index`
/// (epoch number, SNR point, and the like).
pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 32) ^ index);
    rng
}
