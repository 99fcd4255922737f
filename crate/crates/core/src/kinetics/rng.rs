//! Deterministic counter-style random streams. Every stochastic kernel draws
//! from a stream keyed by `(seed, step, cell)`, so per-cell work can run in
//! any order (or in parallel) and still reproduce bit-identical trajectories.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Stream for one collision cell at one step. `step` and `cell` are packed
/// into the 64-bit stream id; cell counts are validated elsewhere to fit.
pub fn stream_rng(seed: u64, step: u64, cell: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream((step << 32) | (cell & 0xffff_ffff));
    rng
}

/// Stream for one-shot uses (ensemble builders). Tags keep different
/// builders on the same seed independent.
pub fn tagged_rng(seed: u64, tag: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(0xffff_ffff_0000_0000 | tag);
    rng
}
