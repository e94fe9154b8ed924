//! Pinned random number generation: SplitMix64 for seeding and stream
//! derivation, xoshiro256** for draws.
//!
//! Every seeded behavior in the crate goes through [`RngStream`], so fixing
//! these algorithms (and the way reals, indices and normals are built from
//! raw words) is what makes runs reproducible bit for bit.

use std::f64::consts::PI;

/// Increment of the SplitMix64 Weyl sequence (2^64 / golden ratio).
pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 step: advances `state` and returns the mixed output.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A xoshiro256** generator owned by one logical task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    s: [u64; 4],
}

impl RngStream {
    /// Expands `seed` into a full state with four SplitMix64 outputs.
    pub fn from_seed(seed: u64) -> Self {
        let mut sm = seed;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Self { s }
    }

    pub fn state(&self) -> [u64; 4] {
        self.s
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform real in [0, 1) from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in [0, n) as floor(u * n).
    pub fn next_index(&mut self, n: usize) -> usize {
        assert!(n > 0);
        ((self.next_f64() * n as f64) as usize).min(n - 1)
    }

    /// Standard normal via Box-Muller. Always consumes two uniforms and
    /// returns the cosine branch.
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * PI * u2).cos()
    }

    /// Fisher-Yates shuffle, drawing from the last position down.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.next_index(i + 1);
            items.swap(i, j);
        }
    }
}

/// Independent stream for the task at (`round`, `index`).
///
/// The seed is one SplitMix64 output taken from state
/// `master ^ round * GOLDEN_GAMMA ^ index`, then expanded like
/// [`RngStream::from_seed`].
pub fn derive_stream(master_seed: u64, round: u64, index: u64) -> RngStream {
    let mut state = master_seed ^ round.wrapping_mul(GOLDEN_GAMMA) ^ index;
    let seed = splitmix64(&mut state);
    RngStream::from_seed(seed)
}
