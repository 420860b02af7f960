//! Deterministic random numbers.
//!
//! The generator is SplitMix64 (Steele, Lea, Flood 2014): state advances by
//! `0x9E3779B97F4A7C15` and outputs are mixed with the multipliers
//! `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB`. Uniform doubles take the top
//! 53 bits of each output; normals use the Box-Muller transform. The stream
//! therefore depends only on the seed, on every platform.

use num_complex::Complex64;
use rand::{Rng as _, SeedableRng};
use rand_xoshiro::SplitMix64;

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: SplitMix64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { seed, inner: SplitMix64::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller (one value per call, the partner is discarded).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Complex number with independent standard-normal parts.
    pub fn complex_normal(&mut self) -> Complex64 {
        let re = self.normal();
        Complex64::new(re, self.normal())
    }
}
