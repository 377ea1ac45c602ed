//! Seeded, splittable random streams.
//!
//! Every consumer of randomness asks for a substream keyed by the master seed,
//! a [`Domain`] tag and an index (row id, trial number, ...). Keys map to
//! disjoint ChaCha8 keys, so draws made for one row never shift the draws made
//! for another and results do not depend on the order of discovery.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The generator behind every substream.
pub type Stream = ChaCha8Rng;

/// Purpose tag separating substreams that share a master seed and an index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    /// Target draws of the per-row partial permutations.
    Permutation,
    /// Slot draws of a walker.
    Walk,
    /// Raw heavy-tailed row entries.
    Pareto,
    /// Start-state sampling.
    Starts,
    /// Independent Monte Carlo trials.
    Trial,
    /// Anything else a caller wants separated, keyed by a free tag.
    Custom(u64),
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::Permutation => 0x7065_726d,
            Domain::Walk => 0x7761_6c6b,
            Domain::Pareto => 0x7061_7265,
            Domain::Starts => 0x7374_6172,
            Domain::Trial => 0x7472_6961,
            Domain::Custom(t) => splitmix64(t ^ 0x6375_7374_6f6d_0000),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Substream for `(seed, domain, index)`.
pub fn substream(seed: u64, domain: Domain, index: u64) -> Stream {
    let words = [
        seed,
        domain.tag(),
        index,
        splitmix64(seed ^ splitmix64(domain.tag() ^ splitmix64(index))),
    ];
    let mut key = [0u8; 32];
    for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Derive a child seed from a parent seed, e.g. one seed per environment.
pub fn child_seed(seed: u64, domain: Domain, index: u64) -> u64 {
    substream(seed, domain, index).random()
}

/// Uniform value in the open interval (0, 1).
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Index drawn with probability proportional to `weights`, which must sum to
/// (approximately) `total`.
pub fn pick_weighted<R: Rng + ?Sized>(rng: &mut R, weights: &[f64], total: f64) -> usize {
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return i;
        }
    }
    // Rounding left `target` past the last partial sum.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}
