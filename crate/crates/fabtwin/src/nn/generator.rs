//! Conditional generator: U-Net trunk with a latent vector tiled across the
//! bottleneck and concatenated channel-wise, so one layout can map to many
//! plausible outputs.

use super::core::Core;
use super::tensor::Tensor;
use super::NnError;
use crate::raster::{BitMask, GrayImage};
use crate::rng::RngSeed;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct GeneratorConfig {
    /// Number of stride-2 levels down (and back up).
    pub depth: usize,
    /// Channels at the first level; the ladder is min(base·2^level, 8·base).
    pub base_width: usize,
    /// Latent vector length injected at the bottleneck.
    pub latent_dim: usize,
    /// Square input side in pixels; must be divisible by 2^depth.
    pub input_size: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self { depth: 8, base_width: 32, latent_dim: 16, input_size: 256 }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.depth < 2 {
            return Err(NnError::InvalidConfig("depth must be at least 2".into()));
        }
        if self.base_width == 0 || self.latent_dim == 0 {
            return Err(NnError::InvalidConfig("base_width and latent_dim must be positive".into()));
        }
        let step = 1usize
            .checked_shl(self.depth as u32)
            .ok_or_else(|| NnError::InvalidConfig("depth overflows the size arithmetic".into()))?;
        if self.input_size == 0 || self.input_size % step != 0 {
            return Err(NnError::InvalidConfig(format!(
                "input_size {} is not divisible by 2^{}",
                self.input_size, self.depth
            )));
        }
        Ok(())
    }

    /// Spatial side of the bottleneck feature map.
    pub fn bottleneck_hw(&self) -> usize {
        self.input_size >> self.depth
    }
}

#[derive(Debug, Clone)]
pub struct Generator {
    pub cfg: GeneratorConfig,
    pub core: Core,
}

pub fn build_generator(cfg: GeneratorConfig, seed: RngSeed) -> Result<Generator, NnError> {
    cfg.validate()?;
    let mut rng = seed.rng();
    let core = Core::new(cfg.depth, cfg.base_width, cfg.latent_dim, 0.0, &mut rng);
    Ok(Generator { cfg, core })
}

/// Draw a latent vector of i.i.d. standard normal components.
pub fn sample_latent(d: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

impl Generator {
    fn check_layout(&self, layout: &BitMask) -> Result<(), NnError> {
        if layout.width() != self.cfg.input_size || layout.height() != self.cfg.input_size {
            return Err(NnError::InvalidInput(format!(
                "layout {}x{} does not match configured input size {}",
                layout.width(), layout.height(), self.cfg.input_size
            )));
        }
        Ok(())
    }

    pub fn forward(&self, layout: &BitMask, z: &[f64]) -> Result<GrayImage, NnError> {
        Ok(self.forward_tensor(layout, z)?.to_gray())
    }

    pub(crate) fn forward_tensor(&self, layout: &BitMask, z: &[f64]) -> Result<Tensor, NnError> {
        self.check_layout(layout)?;
        if z.len() != self.cfg.latent_dim {
            return Err(NnError::InvalidInput(format!(
                "latent length {} does not match configured dim {}",
                z.len(),
                self.cfg.latent_dim
            )));
        }
        let x = Tensor::from_mask(layout);
        Ok(self.core.forward(&x, Some(z), false, None))
    }

    /// M outputs for one layout, each under an independent latent draw from
    /// the child streams of `seed`.
    pub fn sample_outputs(
        &self,
        layout: &BitMask,
        m: usize,
        seed: RngSeed,
    ) -> Result<Vec<GrayImage>, NnError> {
        if m == 0 {
            return Err(NnError::InvalidInput("sample count must be at least 1".into()));
        }
        self.check_layout(layout)?;
        use rayon::prelude::*;
        let zs: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                let mut r = seed.child("z", i as u64).rng();
                sample_latent(self.cfg.latent_dim, &mut r)
            })
            .collect();
        zs.par_iter().map(|z| self.forward(layout, z)).collect()
    }

    pub fn param_count(&self) -> usize {
        self.core.param_count()
    }

    /// Order-stable sum over all parameters; cheap identity fingerprint.
    pub fn checksum(&self) -> f64 {
        self.core.param_tensors().iter().flat_map(|t| t.iter()).map(|&v| v as f64).sum()
    }
}
