use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Ornstein-Uhlenbeck exploration noise, one component per action entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuNoise {
    pub theta: f64,
    pub sigma: f64,
    pub mu: f64,
    x0: Vec<f64>,
    x: Vec<f64>,
}

impl OuNoise {
    /// Starts at the long-run mean.
    pub fn new(dim: usize, theta: f64, sigma: f64, mu: f64) -> Self {
        OuNoise { theta, sigma, mu, x0: vec![mu; dim], x: vec![mu; dim] }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn reset(&mut self) {
        self.x.clone_from(&self.x0);
    }

    /// x ← x + θ(μ − x) + σ·N(0, 1).
    pub fn step<R: Rng>(&mut self, rng: &mut R) -> &[f64] {
        for x in &mut self.x {
            let z: f64 = StandardNormal.sample(rng);
            *x += self.theta * (self.mu - *x) + self.sigma * z;
        }
        &self.x
    }
}
