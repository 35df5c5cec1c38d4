use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    /// Discrete OU: `x ← x + θ(μ − x) + ξ`, μ = 0, ξ ~ N(0, 1).
    OrnsteinUhlenbeck { theta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    #[serde(flatten)]
    pub kind: NoiseKind,
    /// Initial standard deviation in action units.
    pub scale: f64,
    /// Per-episode multiplier applied to `scale`.
    pub decay: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { kind: NoiseKind::Gaussian, scale: 0.1, decay: 0.999 }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale >= 0.0) {
            return Err(Error::InvalidParams(format!("noise scale must be >= 0, got {}", self.scale)));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::InvalidParams(format!("noise decay must be in (0, 1], got {}", self.decay)));
        }
        if let NoiseKind::OrnsteinUhlenbeck { theta } = self.kind {
            if !(theta > 0.0 && theta <= 1.0) {
                return Err(Error::InvalidParams(format!("OU theta must be in (0, 1], got {theta}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseProcess {
    config: NoiseConfig,
    scale: f64,
    state: Vec<f64>,
}

impl NoiseProcess {
    pub fn new(config: NoiseConfig, dim: usize) -> Result<Self> {
        config.validate()?;
        Ok(NoiseProcess { scale: config.scale, config, state: vec![0.0; dim] })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Clears the OU state at the start of an episode.
    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|x| *x = 0.0);
    }

    pub fn end_episode(&mut self) {
        self.scale *= self.config.decay;
    }

    pub fn sample<R: Rng>(&mut self, rng: &mut R) -> Vec<f64> {
        match self.config.kind {
            NoiseKind::Gaussian => (0..self.state.len())
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    self.scale * z
                })
                .collect(),
            NoiseKind::OrnsteinUhlenbeck { theta } => {
                for x in &mut self.state {
                    let z: f64 = StandardNormal.sample(rng);
                    *x += -theta * *x + z;
                }
                self.state.iter().map(|x| self.scale * x).collect()
            }
        }
    }
}
