//! Seeded randomness primitives.
//!
//! Everything random in this crate flows through a `ChaCha8Rng` plus the
//! hand-written draws below, so a `(seed, draw order)` pair pins every number
//! exactly. The recipes are spelled out here so another implementation (or
//! another language) can reproduce the streams bit for bit:
//!
//! - stream derivation: `derive_seed(seed, tag) = splitmix64(seed XOR
//!   splitmix64(tag + 0x9E3779B97F4A7C15))`, all arithmetic wrapping;
//! - uniform in `[0,1)`: top 53 bits of one `next_u64`, scaled by `2^-53`;
//! - standard normal: Box-Muller, `sqrt(-2 ln u1) * cos(2 pi u2)` from two
//!   consecutive uniforms (`u1` floored at `2^-53`), one pair per draw;
//! - Bernoulli(p): one uniform, success iff `u < p`;
//! - shuffling: Fisher-Yates from the top index down, `j = next_u64() % (i+1)`.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer; one full avalanche round.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a base seed and a stream tag.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag.wrapping_add(GOLDEN)))
}

/// The crate-wide deterministic generator.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw in `[0, 1)` from the top 53 bits of one `next_u64`.
pub fn unit_f64(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal draw via Box-Muller; consumes exactly two uniforms.
pub fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = unit_f64(rng).max(1.0 / (1u64 << 53) as f64);
    let u2 = unit_f64(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Bernoulli draw; consumes exactly one uniform.
pub fn bernoulli(rng: &mut ChaCha8Rng, p: f64) -> u8 {
    u8::from(unit_f64(rng) < p)
}

/// A Fisher-Yates permutation of `0..n`.
///
/// The modulo step carries a bias of at most `n / 2^64` per draw, which is
/// irrelevant at the sizes used here and keeps the recipe portable.
pub fn shuffled_indices(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        idx.swap(i, j);
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible() {
        let mut a = seeded_rng(42);
        let mut b = seeded_rng(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn derived_seeds_differ_by_tag() {
        let s = 7;
        assert_ne!(derive_seed(s, 0), derive_seed(s, 1));
        assert_eq!(derive_seed(s, 3), derive_seed(s, 3));
    }

    #[test]
    fn unit_draws_stay_in_range() {
        let mut rng = seeded_rng(1);
        for _ in 0..10_000 {
            let u = unit_f64(&mut rng);
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn normal_draws_have_sane_moments() {
        let mut rng = seeded_rng(5);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| std_normal(&mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|z| (z - mean) * (z - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut rng = seeded_rng(9);
        let perm = shuffled_indices(100, &mut rng);
        let mut sorted = perm.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
    }
}
