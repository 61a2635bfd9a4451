//! Reproducible Gaussian noise.
//!
//! Every path owns a [`NoiseStream`] addressed by `(seed, path_index)`: a
//! ChaCha8 generator keyed by `seed` whose 64-bit stream id is the path index.
//! Streams are therefore independent of how paths are scheduled over workers.
//! Standard normals use the ziggurat sampler of `rand_distr::StandardNormal`;
//! that choice is fixed so results reproduce within a build.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Source of i.i.d. standard normal draws.
pub trait GaussianSource {
    fn standard_normal(&mut self) -> f64;

    /// Fills `out` with a Brownian increment over a step of length `delta`,
    /// i.e. `√Δ · Z` with `Z` standard normal.
    fn fill_increment(&mut self, delta: f64, out: &mut [f64]) {
        self.fill_scaled(delta.sqrt(), out);
    }

    /// Fills `out` with `scale · Z`.
    #[inline]
    fn fill_scaled(&mut self, scale: f64, out: &mut [f64]) {
        for o in out.iter_mut() {
            *o = scale * self.standard_normal();
        }
    }
}

impl<G: GaussianSource + ?Sized> GaussianSource for &mut G {
    fn standard_normal(&mut self) -> f64 {
        (**self).standard_normal()
    }
}

#[derive(Debug, Clone)]
pub struct NoiseStream {
    seed: u64,
    path_index: u64,
    draws: u64,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, path_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_index);
        Self {
            seed,
            path_index,
            draws: 0,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_index(&self) -> u64 {
        self.path_index
    }

    /// Number of standard normals drawn so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// `√Δ · Z` for a fresh standard normal vector `Z` of length `dim_noise`.
    pub fn gaussian_increment(&mut self, delta: f64, dim_noise: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim_noise];
        self.fill_increment(delta, &mut out);
        out
    }
}

impl GaussianSource for NoiseStream {
    #[inline]
    fn standard_normal(&mut self) -> f64 {
        self.draws += 1;
        self.rng.sample(StandardNormal)
    }
}

/// Replays a fixed list of standard normal draws; for tests and for
/// injecting hand-built paths. Panics when the script runs out.
#[derive(Debug, Clone)]
pub struct ScriptedNoise {
    draws: Vec<f64>,
    next: usize,
}

impl ScriptedNoise {
    pub fn new(draws: Vec<f64>) -> Self {
        Self { draws, next: 0 }
    }

    pub fn consumed(&self) -> usize {
        self.next
    }
}

impl GaussianSource for ScriptedNoise {
    fn standard_normal(&mut self) -> f64 {
        let z = *self
            .draws
            .get(self.next)
            .unwrap_or_else(|| panic!("scripted noise exhausted after {} draws", self.next));
        self.next += 1;
        z
    }
}
