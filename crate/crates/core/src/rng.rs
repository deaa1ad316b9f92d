//! Seed derivation and permutation-stable weighted sampling.
//!
//! All randomness in the crate flows from `u64` seeds. Independent streams
//! (per episode, per selection round, per stratum) are derived with [`split`],
//! which never mutates shared state, so parallel evaluation stays
//! reproducible.
//!
//! Weighted picks use an exponential race keyed by `(seed, point id, round)`:
//! point `i` draws `u_i` from its own hash and the winner is
//! `argmin -ln(u_i) / w_i`. The winner is distributed exactly proportionally
//! to the weights, and because the draw depends on the point's stable id
//! rather than its row position, permuting pool rows permutes the winner
//! along with them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed for the given stream index.
pub fn split(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream.wrapping_add(0xA076_1D64_78BD_642F)))
}

/// A ChaCha stream seeded from `seed`, for bulk draws.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A uniform draw in (0, 1) that depends only on `(seed, id, round)`.
pub fn unit(seed: u64, id: u64, round: u64) -> f64 {
    let h = splitmix64(split(seed, round) ^ splitmix64(id));
    // 53 mantissa bits, offset by half a step so 0.0 is unreachable.
    ((h >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Picks one index with probability proportional to `weights[i]`, skipping
/// entries where `taken[i]` is true.
///
/// If every live weight is zero (or negative), the pick falls back to a
/// uniform draw among the live entries, so exhaustive selection still
/// terminates. Returns `None` only when everything is taken.
pub fn race_pick(
    weights: &[f64],
    taken: &[bool],
    ids: &[u64],
    seed: u64,
    round: u64,
) -> Option<usize> {
    debug_assert_eq!(weights.len(), taken.len());
    debug_assert_eq!(weights.len(), ids.len());

    let mut best: Option<(f64, usize)> = None;
    for i in 0..weights.len() {
        if taken[i] || weights[i] <= 0.0 {
            continue;
        }
        let key = -unit(seed, ids[i], round).ln() / weights[i];
        if best.map_or(true, |(b, _)| key < b) {
            best = Some((key, i));
        }
    }
    if let Some((_, i)) = best {
        return Some(i);
    }

    // All live weights were zero: uniform fallback over live entries.
    let mut best: Option<(f64, usize)> = None;
    for i in 0..weights.len() {
        if taken[i] {
            continue;
        }
        let key = -unit(seed, ids[i], round).ln();
        if best.map_or(true, |(b, _)| key < b) {
            best = Some((key, i));
        }
    }
    best.map(|(_, i)| i)
}
