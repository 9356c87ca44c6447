//! Alternating adversarial training plus the L1-only baseline trainers.
//!
//! Per step: draw a batch, draw fresh noise for every item, run the generator
//! once (cached), update D on real-vs-fake pairs, then update G against the
//! *updated* D reusing the cached generator activations. One D step per G
//! step. Everything is keyed off labeled child seeds, so a run is a pure
//! function of (dataset, config, seed).

use super::adam::{AdamHyper, AdamOpt};
use super::losses::{
    d_loss_discriminator, d_loss_generator_gan, d_loss_l1, loss_discriminator, loss_generator_gan,
    loss_generator_total, loss_l1,
};
use super::{LossRecord, TrainConfig, TrainError};
use crate::dataset::TrainDataset;
use crate::nn::checkpoint::{save_generator, save_unet};
use crate::nn::core::{CoreCache, CoreGrads};
use crate::nn::discriminator::{DiscGrads, Discriminator};
use crate::nn::generator::{build_generator, sample_latent, Generator};
use crate::nn::unet::{build_unet, UNet};
use crate::nn::tensor::Tensor;
use crate::rng::RngSeed;
use rand::Rng;
use rayon::prelude::*;
use std::time::Instant;

pub struct GanTrainOutput {
    pub generator: Generator,
    /// Absent when `lambda_gan` is 0 (L1-only degenerate run).
    pub discriminator: Option<Discriminator>,
    pub log: Vec<LossRecord>,
}

fn adam_hyper(cfg: &TrainConfig, lr: f64) -> AdamHyper {
    AdamHyper { lr, beta1: cfg.beta1, beta2: cfg.beta2, eps: cfg.adam_eps }
}

fn check_dataset(data: &TrainDataset, cfg: &TrainConfig) -> Result<(), TrainError> {
    if data.pairs.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if data.input_size != cfg.generator.input_size {
        return Err(TrainError::Shape(format!(
            "dataset images are {0}x{0} but the model expects {1}x{1}",
            data.input_size, cfg.generator.input_size
        )));
    }
    Ok(())
}

/// (pair, outcome) indices for one step, drawn with replacement.
fn sample_batch(data: &TrainDataset, batch: usize, seed: RngSeed, step: usize) -> Vec<(usize, usize)> {
    let mut rng = seed.child("batch", step as u64).rng();
    (0..batch)
        .map(|_| {
            let pi = rng.gen_range(0..data.pairs.len());
            let oi = rng.gen_range(0..data.pairs[pi].outcomes.len());
            (pi, oi)
        })
        .collect()
}

fn diverged(step: usize, e: TrainError) -> TrainError {
    match e {
        TrainError::NonFinite(detail) => TrainError::Diverged { step, detail },
        other => other,
    }
}

/// Adversarial training per the alternating procedure. With `lambda_gan = 0`
/// the discriminator is never built and the run degenerates to L1 regression.
pub fn train_genfab(data: &TrainDataset, cfg: &TrainConfig) -> Result<GanTrainOutput, TrainError> {
    cfg.validate()?;
    check_dataset(data, cfg)?;
    let root = RngSeed(cfg.seed);
    let mut gen = build_generator(cfg.generator.clone(), root.child("gen_init", 0))?;
    let adversarial = cfg.lambda_gan > 0.0;
    let mut disc = if adversarial {
        Some(build_discriminator_for(cfg, root.child("disc_init", 0))?)
    } else {
        None
    };
    let mut opt_g = AdamOpt::new(
        adam_hyper(cfg, cfg.lr_g),
        &param_lens(&gen.core.param_tensors()),
    );
    let mut opt_d = disc
        .as_ref()
        .map(|d| AdamOpt::new(adam_hyper(cfg, cfg.lr_d), &param_lens(&d.param_tensors())));

    let b = cfg.batch_size;
    let inv_b = 1.0 / b as f64;
    let d_latent = cfg.generator.latent_dim;
    let mut log = Vec::new();
    let t0 = Instant::now();

    for step in 1..=cfg.steps {
        let items = sample_batch(data, b, root, step);
        let zs: Vec<Vec<f64>> = if d_latent > 0 {
            let mut zrng = root.child("z", step as u64).rng();
            (0..b).map(|_| sample_latent(d_latent, &mut zrng)).collect()
        } else {
            vec![Vec::new(); b]
        };

        // one generator pass per item, reused by both phases
        let caches: Vec<CoreCache> = items
            .par_iter()
            .zip(&zs)
            .map(|(&(pi, _), z)| {
                let z = if d_latent > 0 { Some(z.as_slice()) } else { None };
                gen.core.forward_cached(&data.pairs[pi].layout, z, false, None)
            })
            .collect();

        // discriminator phase
        let mut loss_d = 0.0;
        if let (Some(d), Some(opt)) = (disc.as_mut(), opt_d.as_mut()) {
            let parts: Vec<Result<(f64, DiscGrads), TrainError>> = items
                .par_iter()
                .zip(&caches)
                .map(|(&(pi, oi), cache)| {
                    let pair = &data.pairs[pi];
                    let real = Tensor::concat_channels(&pair.layout, &pair.outcomes[oi]);
                    let fake = Tensor::concat_channels(&pair.layout, &cache.output);
                    let rc = d.forward_cached(&real);
                    let fc = d.forward_cached(&fake);
                    let loss = loss_discriminator(rc.logits(), fc.logits())?;
                    let (mut d_lr, mut d_lf) = d_loss_discriminator(rc.logits(), fc.logits());
                    for v in d_lr.data.iter_mut() {
                        *v *= inv_b;
                    }
                    for v in d_lf.data.iter_mut() {
                        *v *= inv_b;
                    }
                    let mut g = DiscGrads::zeros_like(d);
                    d.backward(&rc, &d_lr, Some(&mut g), false);
                    d.backward(&fc, &d_lf, Some(&mut g), false);
                    Ok((loss, g))
                })
                .collect();
            let mut dgrads = DiscGrads::zeros_like(d);
            for p in parts {
                let (l, g) = p.map_err(|e| diverged(step, e))?;
                loss_d += l * inv_b;
                dgrads.add(&g);
            }
            opt.step(d.param_tensors_mut(), dgrads.tensors())
                .map_err(|e| diverged(step, e))?;
        }

        // generator phase, against the just-updated discriminator
        let disc_ref = disc.as_ref();
        let parts: Vec<Result<(f64, f64, CoreGrads), TrainError>> = items
            .par_iter()
            .zip(&caches)
            .map(|(&(pi, oi), cache)| {
                let pair = &data.pairs[pi];
                let target = &pair.outcomes[oi];
                let l1 = loss_l1(&cache.output, target)?;
                let mut d_img = d_loss_l1(&cache.output, target);
                for v in d_img.data.iter_mut() {
                    *v *= cfg.lambda_l1 * inv_b;
                }
                let mut gan = 0.0;
                if let Some(d) = disc_ref {
                    let fake = Tensor::concat_channels(&pair.layout, &cache.output);
                    let fc = d.forward_cached(&fake);
                    gan = loss_generator_gan(fc.logits())?;
                    let mut d_lf = d_loss_generator_gan(fc.logits());
                    for v in d_lf.data.iter_mut() {
                        *v *= cfg.lambda_gan * inv_b;
                    }
                    let d_pair = d
                        .backward(&fc, &d_lf, None, true)
                        .expect("input gradient requested");
                    let (_d_layout, d_fake) = d_pair.split_channels(1);
                    for (a, b) in d_img.data.iter_mut().zip(&d_fake.data) {
                        *a += b;
                    }
                }
                let mut g = CoreGrads::zeros_like(&gen.core);
                gen.core.backward(cache, &d_img, &mut g);
                Ok((gan, l1, g))
            })
            .collect();
        let mut loss_gan = 0.0;
        let mut loss_l1_mean = 0.0;
        let mut ggrads = CoreGrads::zeros_like(&gen.core);
        for p in parts {
            let (gan, l1, g) = p.map_err(|e| diverged(step, e))?;
            loss_gan += cfg.lambda_gan * gan * inv_b;
            loss_l1_mean += l1 * inv_b;
            ggrads.add(&g);
        }
        opt_g
            .step(gen.core.param_tensors_mut(), ggrads.tensors())
            .map_err(|e| diverged(step, e))?;

        if step % cfg.log_every == 0 {
            log.push(LossRecord {
                step,
                loss_d,
                loss_g_total: loss_generator_total(loss_gan, loss_l1_mean, 1.0, cfg.lambda_l1),
                loss_g_gan: loss_gan,
                loss_g_l1: loss_l1_mean,
                wall_ms: t0.elapsed().as_secs_f64() * 1e3,
            });
        }
    }

    if let Some(path) = &cfg.checkpoint_path {
        save_generator(&gen, path)?;
    }
    Ok(GanTrainOutput { generator: gen, discriminator: disc, log })
}

fn build_discriminator_for(cfg: &TrainConfig, seed: RngSeed) -> Result<Discriminator, TrainError> {
    Ok(crate::nn::build_discriminator(cfg.discriminator_config(), seed)?)
}

fn param_lens(params: &[&Vec<f32>]) -> Vec<usize> {
    params.iter().map(|p| p.len()).collect()
}

/// L1-only baseline. `seed` (not `cfg.seed`) drives init, batching, and
/// dropout so ensemble members diverge cleanly. Dropout, when configured,
/// stays active throughout training.
pub fn train_unet(
    data: &TrainDataset,
    cfg: &TrainConfig,
    dropout_p: f64,
    seed: RngSeed,
) -> Result<(UNet, Vec<LossRecord>), TrainError> {
    cfg.validate()?;
    check_dataset(data, cfg)?;
    let mut net = build_unet(cfg.generator.clone(), dropout_p, seed.child("unet_init", 0))?;
    let mut opt = AdamOpt::new(
        adam_hyper(cfg, cfg.lr_g),
        &param_lens(&net.core.param_tensors()),
    );
    let b = cfg.batch_size;
    let inv_b = 1.0 / b as f64;
    let mut log = Vec::new();
    let t0 = Instant::now();

    for step in 1..=cfg.steps {
        let items = sample_batch(data, b, seed, step);
        let drop_seed = seed.child("drop", step as u64);
        let parts: Vec<Result<(f64, CoreGrads), TrainError>> = items
            .par_iter()
            .enumerate()
            .map(|(k, &(pi, oi))| {
                let pair = &data.pairs[pi];
                let mut rng = drop_seed.child("item", k as u64).rng();
                let cache = net.core.forward_cached(
                    &pair.layout,
                    None,
                    dropout_p > 0.0,
                    Some(&mut rng),
                );
                let target = &pair.outcomes[oi];
                let l1 = loss_l1(&cache.output, target)?;
                let mut d_img = d_loss_l1(&cache.output, target);
                for v in d_img.data.iter_mut() {
                    *v *= cfg.lambda_l1 * inv_b;
                }
                let mut g = CoreGrads::zeros_like(&net.core);
                net.core.backward(&cache, &d_img, &mut g);
                Ok((l1, g))
            })
            .collect();
        let mut loss_l1_mean = 0.0;
        let mut grads = CoreGrads::zeros_like(&net.core);
        for p in parts {
            let (l1, g) = p.map_err(|e| diverged(step, e))?;
            loss_l1_mean += l1 * inv_b;
            grads.add(&g);
        }
        opt.step(net.core.param_tensors_mut(), grads.tensors())
            .map_err(|e| diverged(step, e))?;

        if step % cfg.log_every == 0 {
            log.push(LossRecord {
                step,
                loss_d: 0.0,
                loss_g_total: cfg.lambda_l1 * loss_l1_mean,
                loss_g_gan: 0.0,
                loss_g_l1: loss_l1_mean,
                wall_ms: t0.elapsed().as_secs_f64() * 1e3,
            });
        }
    }

    if let Some(path) = &cfg.checkpoint_path {
        save_unet(&net, path)?;
    }
    Ok((net, log))
}

/// K independent L1 U-Nets; member k derives everything from
/// `base_seed.child("member", k)`. Members run in parallel.
pub fn train_ensemble(
    data: &TrainDataset,
    cfg: &TrainConfig,
    k: usize,
    base_seed: RngSeed,
) -> Result<Vec<(UNet, Vec<LossRecord>)>, TrainError> {
    if k == 0 {
        return Err(TrainError::Config("ensemble needs at least one member".into()));
    }
    let mut member_cfg = cfg.clone();
    member_cfg.checkpoint_path = None; // member files are the caller's concern
    (0..k)
        .into_par_iter()
        .map(|m| train_unet(data, &member_cfg, 0.0, base_seed.child("member", m as u64)))
        .collect()
}
