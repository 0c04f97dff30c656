//! Keyed random streams. Every draw is a pure function of a user seed, a
//! label, and integer counters, so any partition of work across threads
//! reproduces the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

fn key(seed: u64, label: &str, counter: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    h.update(counter.to_le_bytes());
    h.finalize().into()
}

/// Derived sub-seed for a labeled subsystem.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let k = key(seed, label, 0);
    u64::from_le_bytes(k[..8].try_into().expect("8 bytes"))
}

/// Generator keyed by `(seed, label, counter)`.
pub fn keyed_rng(seed: u64, label: &str, counter: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(key(seed, label, counter))
}

pub const EDGE_STREAM: u64 = 0;
pub const SITE_STREAM: u64 = 1;

/// Per-shot generator; `stream` separates edge draws from site draws.
pub fn shot_rng(seed: u64, shot: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = keyed_rng(seed, "shot", shot);
    rng.set_stream(stream);
    rng
}

/// Inverse-CDF draw from unnormalized non-negative weights.
pub fn categorical(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (j, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last_positive = j;
        if target < acc {
            return j;
        }
    }
    last_positive
}
