//! Baseline encoder/decoder: the generator trunk without latent injection.
//! With dropout_p = 0 it is the deterministic baseline; with dropout active
//! at inference it yields stochastic forward passes for uncertainty
//! estimation, and independently trained copies form an ensemble.

use super::core::Core;
use super::generator::GeneratorConfig;
use super::tensor::Tensor;
use super::NnError;
use crate::raster::{BitMask, GrayImage};
use crate::rng::RngSeed;
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct UNet {
    pub cfg: GeneratorConfig,
    pub dropout_p: f64,
    pub core: Core,
}

pub fn build_unet(cfg: GeneratorConfig, dropout_p: f64, seed: RngSeed) -> Result<UNet, NnError> {
    cfg.validate()?;
    if !(0.0..1.0).contains(&dropout_p) {
        return Err(NnError::InvalidConfig(format!("dropout_p {dropout_p} outside [0,1)")));
    }
    let mut rng = seed.rng();
    let core = Core::new(cfg.depth, cfg.base_width, 0, dropout_p, &mut rng);
    Ok(UNet { cfg, dropout_p, core })
}

impl UNet {
    fn check_layout(&self, layout: &BitMask) -> Result<(), NnError> {
        if layout.width() != self.cfg.input_size || layout.height() != self.cfg.input_size {
            return Err(NnError::InvalidInput(format!(
                "layout {}x{} does not match configured input size {}",
                layout.width(), layout.height(), self.cfg.input_size
            )));
        }
        Ok(())
    }

    pub fn forward(
        &self,
        layout: &BitMask,
        dropout_active: bool,
        seed: RngSeed,
    ) -> Result<GrayImage, NnError> {
        self.check_layout(layout)?;
        let x = Tensor::from_mask(layout);
        let mut rng = seed.rng();
        Ok(self.core.forward(&x, None, dropout_active, Some(&mut rng)).to_gray())
    }

    /// M stochastic forwards with dropout live, one child stream per sample.
    pub fn mc_dropout_samples(
        &self,
        layout: &BitMask,
        m: usize,
        seed: RngSeed,
    ) -> Result<Vec<GrayImage>, NnError> {
        if m == 0 {
            return Err(NnError::InvalidInput("sample count must be at least 1".into()));
        }
        self.check_layout(layout)?;
        (0..m)
            .into_par_iter()
            .map(|i| self.forward(layout, true, seed.child("mc", i as u64)))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.core.param_count()
    }

    pub fn checksum(&self) -> f64 {
        self.core.param_tensors().iter().flat_map(|t| t.iter()).map(|&v| v as f64).sum()
    }
}

/// One deterministic forward per member, in member order.
pub fn ensemble_samples(members: &[UNet], layout: &BitMask) -> Result<Vec<GrayImage>, NnError> {
    if members.is_empty() {
        return Err(NnError::InvalidInput("ensemble needs at least one member".into()));
    }
    members
        .par_iter()
        .map(|m| m.forward(layout, false, RngSeed(0)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::generator::build_generator;

    fn cfg() -> GeneratorConfig {
        GeneratorConfig { depth: 3, base_width: 4, latent_dim: 4, input_size: 32 }
    }

    fn layout() -> BitMask {
        let mut m = BitMask::zeros(32, 32);
        for y in 8..24 {
            for x in 8..24 {
                m.set(x, y, 1);
            }
        }
        m
    }

    #[test]
    fn topology_matches_generator_minus_latent() {
        let u = build_unet(cfg(), 0.0, RngSeed(1)).unwrap();
        let g = build_generator(cfg(), RngSeed(1)).unwrap();
        // identical layer shapes except the first decoder block input
        assert_eq!(u.core.enc.len(), g.core.enc.len());
        assert_eq!(u.core.dec[0].ci + cfg().latent_dim, g.core.dec[0].ci);
        for (a, b) in u.core.dec.iter().zip(&g.core.dec).skip(1) {
            assert_eq!((a.ci, a.co), (b.ci, b.co));
        }
        assert_eq!(u.param_count() + 4 * u.core.dec[0].co * 16, g.param_count());
    }

    #[test]
    fn zero_dropout_ignores_the_active_flag() {
        let u = build_unet(cfg(), 0.0, RngSeed(2)).unwrap();
        let l = layout();
        let a = u.forward(&l, false, RngSeed(0)).unwrap();
        let b = u.forward(&l, true, RngSeed(99)).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn dropout_seeds_control_the_output() {
        let u = build_unet(cfg(), 0.1, RngSeed(3)).unwrap();
        let l = layout();
        let a = u.forward(&l, true, RngSeed(10)).unwrap();
        let b = u.forward(&l, true, RngSeed(10)).unwrap();
        let c = u.forward(&l, true, RngSeed(11)).unwrap();
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
        // inactive dropout is deterministic regardless of seed
        let d = u.forward(&l, false, RngSeed(10)).unwrap();
        let e = u.forward(&l, false, RngSeed(11)).unwrap();
        assert_eq!(d.values(), e.values());
    }

    #[test]
    fn mc_samples_reproduce_and_vary() {
        let u = build_unet(cfg(), 0.1, RngSeed(4)).unwrap();
        let l = layout();
        let a = u.mc_dropout_samples(&l, 4, RngSeed(5)).unwrap();
        let b = u.mc_dropout_samples(&l, 4, RngSeed(5)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.values(), y.values());
        }
        assert_ne!(a[0].values(), a[1].values());
        // p = 0 collapses all samples onto the deterministic output
        let u0 = build_unet(cfg(), 0.0, RngSeed(4)).unwrap();
        let s = u0.mc_dropout_samples(&l, 3, RngSeed(5)).unwrap();
        assert_eq!(s[0].values(), s[1].values());
        assert_eq!(s[1].values(), s[2].values());
    }

    #[test]
    fn ensemble_members_differ_and_order_is_stable() {
        let members: Vec<UNet> =
            (0..3).map(|k| build_unet(cfg(), 0.0, RngSeed(100 + k)).unwrap()).collect();
        let l = layout();
        let outs = ensemble_samples(&members, &l).unwrap();
        assert_eq!(outs.len(), 3);
        assert_ne!(outs[0].values(), outs[1].values());
        assert_ne!(outs[1].values(), outs[2].values());
        assert_ne!(outs[0].values(), outs[2].values());
        let single = ensemble_samples(&members[..1], &l).unwrap();
        assert_eq!(single[0].values(), outs[0].values());
        assert!(ensemble_samples(&[], &l).is_err());
    }
}
