//! Seedable, splittable random streams.
//!
//! [`RngStream`] wraps a counter-based generator (ChaCha8) keyed by a global
//! `seed` and a 64-bit `stream_id`. Distinct stream ids produce
//! statistically independent sequences without any coordination, so callers
//! can derive one stream per (cell, replicate) coordinate and evaluate them
//! on any number of workers in any order. Bit-exactness is guaranteed within
//! this implementation only (same seed + stream id => same sequence).
//!
//! Normal variates are produced by inverse-CDF transform of the uniform
//! stream: the variate sequence is a pure function of the uniform sequence,
//! which keeps the reproducibility contract trivial.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dist::std_normal_quantile;
use crate::{Error, Result};

/// 2^-53, for mapping 53 random bits into the open unit interval.
const UNIT: f64 = 1.0 / 9_007_199_254_740_992.0;

/// One independent random stream, identified by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    /// Creates the stream for `(seed, stream_id)`; the pair fully determines
    /// the sequence.
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            rng,
        }
    }

    /// The global seed this stream was keyed with.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The stream id this stream was keyed with.
    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform variate in the open interval (0, 1): the top 53 bits of a
    /// 64-bit word, centered half a step away from both endpoints, so the
    /// inverse-CDF transform below can never receive 0 or 1.
    pub fn next_uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * UNIT
    }

    /// One normal variate with the given mean and standard deviation.
    ///
    /// `sd = 0` returns `mean` exactly (degenerate distribution) but still
    /// advances the stream state, so a sequence of draws consumes the same
    /// number of uniforms regardless of the parameters.
    pub fn draw_normal(&mut self, mean: f64, sd: f64) -> Result<f64> {
        if !sd.is_finite() || sd < 0.0 {
            return Err(Error::domain(format!(
                "standard deviation must be a finite non-negative real, got {sd}"
            )));
        }
        if !mean.is_finite() {
            return Err(Error::domain(format!("mean must be finite, got {mean}")));
        }
        let u = self.next_uniform();
        if sd == 0.0 {
            return Ok(mean);
        }
        // u lies strictly inside (0, 1), so the quantile cannot fail.
        let z = std_normal_quantile(u).expect("open-interval uniform");
        Ok(mean + sd * z)
    }
}

/// SplitMix64 finalizer: a bijective 64-bit scramble with good avalanche
/// behavior. Bijectivity matters: for a fixed prefix hash, distinct
/// replicate indices can never collide onto one stream id.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds one coordinate into a running hash (SplitMix64 step: add the
/// golden-ratio increment plus the value, then scramble). For a fixed `h`
/// the map `v -> absorb(h, v)` is bijective.
pub fn absorb(h: u64, v: u64) -> u64 {
    mix64(h.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(v))
}
