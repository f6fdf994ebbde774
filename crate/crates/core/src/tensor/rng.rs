//! Seeded random source.
//!
//! Backed by ChaCha8 (`rand_chacha`), whose output stream is specified
//! independently of platform and word size. Normal variates come from
//! `rand_distr`'s ziggurat sampler. Both are value-stable for a fixed
//! crate version, so weight initialization is reproducible.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator on ChaCha stream `stream` with the same seed.
    /// Parallel workers get one each instead of sharing a generator.
    pub fn split(&self, stream: u64) -> Rng {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stream.wrapping_add(1));
        Rng {
            seed: self.seed,
            inner,
        }
    }

    pub fn normal(&mut self, mean: f32, std: f32) -> Result<f32> {
        Ok(normal_dist(mean, std)?.sample(&mut self.inner))
    }

    pub fn normal_vec(&mut self, n: usize, mean: f32, std: f32) -> Result<Vec<f32>> {
        let dist = normal_dist(mean, std)?;
        Ok((0..n).map(|_| dist.sample(&mut self.inner)).collect())
    }

    pub fn uniform_vec(&mut self, n: usize, low: f32, high: f32) -> Result<Vec<f32>> {
        if !(low < high) || !low.is_finite() || !high.is_finite() {
            return Err(Error::param(format!("invalid uniform range [{low}, {high})")));
        }
        Ok((0..n).map(|_| self.inner.random_range(low..high)).collect())
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }
}

fn normal_dist(mean: f32, std: f32) -> Result<Normal<f32>> {
    if !(std >= 0.0) || !std.is_finite() || !mean.is_finite() {
        return Err(Error::param(format!(
            "normal requires finite mean and std >= 0, got mean={mean} std={std}"
        )));
    }
    Normal::new(mean, std).map_err(|e| Error::param(e.to_string()))
}
