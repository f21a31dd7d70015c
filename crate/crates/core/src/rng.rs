//! Seeded, counter-addressed random streams.
//!
//! Every random draw in the library comes from a ChaCha8 stream picked by a
//! 64-bit master seed plus a [`StreamKey`]. The key hashes a domain tag and
//! whatever coordinates identify the work item (node path, trial, chunk), so
//! the numbers a work item sees do not depend on which thread runs it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{bail, Result};

/// The generator handed to every sampling routine.
pub type KnitRng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes two words into one; used to derive child seeds.
pub fn mix64(a: u64, b: u64) -> u64 {
    splitmix(a ^ splitmix(b).rotate_left(17))
}

/// Hashed coordinates of a random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn new(domain: &str) -> Self {
        let mut h = FNV_OFFSET;
        for b in domain.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
        StreamKey(splitmix(h))
    }

    #[must_use]
    pub fn with(self, v: u64) -> Self {
        StreamKey(mix64(self.0, v))
    }

    /// Appends a tree path, length-prefixed so that distinct paths never collide
    /// by concatenation.
    #[must_use]
    pub fn with_path(self, path: &[usize]) -> Self {
        path.iter()
            .fold(self.with(path.len() as u64), |k, &i| k.with(i as u64))
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    /// The generator for chunk `chunk` of this stream under `seed`.
    pub fn rng(self, seed: u64, chunk: u64) -> KnitRng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(mix64(self.0, chunk));
        rng
    }
}

/// Inverse-CDF sampler over a small finite outcome set.
#[derive(Clone, Debug)]
pub struct Categorical {
    cdf: Vec<f64>,
}

impl Categorical {
    /// Builds the sampler from probabilities that sum to one within `1e-9`.
    /// Small negative entries from round-off are clamped and the rest
    /// renormalised; larger drift is reported as a numeric error.
    pub fn new(probs: &[f64]) -> Result<Self> {
        if probs.is_empty() {
            bail!(InvalidInput, "empty outcome distribution");
        }
        let mut total = 0.0;
        for &p in probs {
            if !p.is_finite() || !(-1e-9..=1.0 + 1e-9).contains(&p) {
                bail!(Numeric, "outcome probability {p} outside [0,1]");
            }
            total += p.max(0.0);
        }
        if (total - 1.0).abs() > 1e-9 {
            bail!(Numeric, "outcome probabilities sum to {total}");
        }
        let mut acc = 0.0;
        let mut cdf = Vec::with_capacity(probs.len());
        for &p in probs {
            acc += p.max(0.0) / total;
            cdf.push(acc);
        }
        *cdf.last_mut().unwrap() = 1.0;
        Ok(Categorical { cdf })
    }

    pub fn len(&self) -> usize {
        self.cdf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cdf.is_empty()
    }

    pub fn prob(&self, i: usize) -> f64 {
        if i == 0 {
            self.cdf[0]
        } else {
            self.cdf[i] - self.cdf[i - 1]
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        if self.cdf.len() <= 16 {
            self.cdf.iter().position(|&c| u < c).unwrap_or(self.cdf.len() - 1)
        } else {
            self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
        }
    }
}
