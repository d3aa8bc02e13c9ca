//! Counter-based pseudorandom generator.
//!
//! The generator walks a Weyl sequence (`counter += GAMMA`) and feeds each
//! counter value through a 64-bit finalizer (SplitMix64 constants, Stafford
//! variant 13). Because the output is a pure function of `(seed, index)`,
//! any draw can be reproduced positionally and independent streams are
//! derived by hashing the stream id into the starting counter, which keeps
//! parallel sub-batches identical to a serial run.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic counter-based generator; `Clone` copies the position.
#[derive(Debug, Clone)]
pub struct Rng {
    counter: u64,
}

impl Rng {
    /// Root generator for a seed.
    pub fn new(seed: u64) -> Self {
        Rng { counter: mix64(seed) }
    }

    /// Independent stream `stream` of the same seed. Streams are decorrelated
    /// by double-mixing the pair, so `stream(s, 0)`, `stream(s, 1)`, ... can
    /// be handed to parallel workers.
    pub fn stream(seed: u64, stream: u64) -> Self {
        Rng {
            counter: mix64(mix64(seed) ^ mix64(stream.wrapping_mul(GAMMA) ^ 0xA5A5_A5A5_A5A5_A5A5)),
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(GAMMA);
        mix64(self.counter)
    }

    /// Uniform draw on the half-open-at-zero interval `(0, 1]`; safe as a
    /// logarithm argument.
    #[inline]
    pub fn uniform_oc(&mut self) -> f64 {
        (((self.next_u64() >> 11) + 1) as f64) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform draw on `[0, 1)`.
    #[inline]
    pub fn uniform_co(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform draw on `[a, b)`.
    #[inline]
    pub fn uniform_in(&mut self, a: f64, b: f64) -> f64 {
        a + (b - a) * self.uniform_co()
    }

    /// Uniform draw on the open interval `(0, 1)`; safe wherever both tails
    /// must stay strictly interior (quantile inversion, tangent maps).
    #[inline]
    pub fn uniform_oo(&mut self) -> f64 {
        (((self.next_u64() >> 11) as f64) + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }
}
