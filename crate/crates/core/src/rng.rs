//! Seed derivation and permutation sampling.
//!
//! Every source of randomness in the crate flows from a single master seed.
//! Replications derive their generator from `(master seed, stream index)`
//! through a counter-based hash, so trial results are independent of how
//! work is scheduled across threads.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic generator used throughout the crate.
pub type SeededRng = ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a master seed together with labeled counters into a child seed.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut state = master ^ 0x6a09_e667_f3bc_c909;
    let mut out = splitmix64(&mut state);
    for &p in parts {
        state ^= p;
        out ^= splitmix64(&mut state).rotate_left(17);
    }
    out
}

/// Generator for one replication stream.
pub fn stream_rng(master: u64, stream: u64) -> SeededRng {
    SeededRng::seed_from_u64(derive_seed(master, &[stream]))
}

/// Uniform random permutation of `0..m` (Fisher-Yates).
pub fn random_permutation(m: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(rng);
    perm
}

/// Shuffles an existing index buffer in place, resetting it to `0..m` first.
pub fn shuffle_identity(perm: &mut Vec<usize>, m: usize, rng: &mut impl Rng) {
    perm.clear();
    perm.extend(0..m);
    perm.shuffle(rng);
}
