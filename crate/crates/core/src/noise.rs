//! Seeded Gaussian noise.
//!
//! Variates come from ChaCha20 keyed by the 64-bit seed (expanded with
//! `SeedableRng::seed_from_u64`) on the 64-bit stream id, converted to standard
//! normals with the Ziggurat method of `rand_distr::StandardNormal`. Identical
//! `(seed, stream)` pairs always produce identical sequences, and distinct streams
//! never overlap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone)]
pub struct GaussianNoiseSource {
    seed: u64,
    stream: u64,
    rng: ChaCha20Rng,
}

impl GaussianNoiseSource {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        GaussianNoiseSource { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn next_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.rng.sample(StandardNormal);
        }
    }

    pub fn tensor(&mut self, shape: Shape) -> Tensor {
        let mut t = Tensor::zeros(shape);
        self.fill(t.as_mut_slice());
        t
    }

    /// Uniform integer in `[lo, hi]`, drawn from the same stream.
    pub fn uniform_int(&mut self, lo: usize, hi: usize) -> usize {
        self.rng.random_range(lo..=hi)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }
}

/// The two independent noise streams one sampling trajectory consumes.
///
/// The reverse chain (initial `x_T`, reverse-step noise, resample jumps) draws from
/// `reverse`; known-region encodings draw from `known`. Keeping them apart makes a
/// paint with an empty mask consume exactly the draws of an unconditional sample.
#[derive(Debug, Clone)]
pub struct TrajectoryNoise {
    pub reverse: GaussianNoiseSource,
    pub known: GaussianNoiseSource,
}

impl TrajectoryNoise {
    pub fn new(seed: u64, trajectory: u64) -> Self {
        TrajectoryNoise {
            reverse: GaussianNoiseSource::new(seed, trajectory.wrapping_mul(2)),
            known: GaussianNoiseSource::new(seed, trajectory.wrapping_mul(2).wrapping_add(1)),
        }
    }
}
