//! Distribution-level evaluation: set-to-set IoU matching, mean/variance
//! images, histogram divergences, feature-space Fréchet distance, and the
//! aleatoric/epistemic split.

pub mod features;
pub mod hist;
pub mod uncertainty;

pub use features::{embed_features, frechet_distance, Embedder};
pub use hist::{intensity_histogram, kl_divergence, wasserstein_1d, wd_pairwise_mean, Histogram};
pub use uncertainty::{decompose_uncertainty, UncertaintyMaps};

use crate::raster::{binarize, BitMask, GrayImage, RasterError};
use crate::rng::RngSeed;
use rand::Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("dimension mismatch: {0}")]
    Dim(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("binning mismatch: {0}")]
    Binning(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("raster: {0}")]
    Raster(#[from] RasterError),
}

/// Intersection over union of two binary masks. Two blank masks agree
/// perfectly, so the empty/empty case is defined as 1 rather than 0/0.
pub fn iou(a: &BitMask, b: &BitMask) -> Result<f64, MetricError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(MetricError::Dim(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&x, &y) in a.bits().iter().zip(b.bits()) {
        inter += (x & y) as usize;
        union += (x | y) as usize;
    }
    if union == 0 {
        Ok(1.0)
    } else {
        Ok(inter as f64 / union as f64)
    }
}

/// Naive sampling protocol: each real image is compared against one uniformly
/// drawn prediction (child seed per real index). Mean IoU in percent.
pub fn match_random(
    preds: &[BitMask],
    reals: &[BitMask],
    seed: RngSeed,
) -> Result<f64, MetricError> {
    if preds.is_empty() || reals.is_empty() {
        return Err(MetricError::Empty("match_random needs predictions and references".into()));
    }
    let mut sum = 0.0;
    for (i, real) in reals.iter().enumerate() {
        let pick = seed.child("match", i as u64).rng().gen_range(0..preds.len());
        sum += iou(&preds[pick], real)?;
    }
    Ok(100.0 * sum / reals.len() as f64)
}

/// Best-match protocol: each real image independently takes its highest-IoU
/// prediction (with replacement). Mean IoU in percent.
pub fn match_greedy(preds: &[BitMask], reals: &[BitMask]) -> Result<f64, MetricError> {
    if preds.is_empty() || reals.is_empty() {
        return Err(MetricError::Empty("match_greedy needs predictions and references".into()));
    }
    let mut sum = 0.0;
    for real in reals {
        let mut best = 0.0f64;
        for p in preds {
            best = best.max(iou(p, real)?);
        }
        sum += best;
    }
    Ok(100.0 * sum / reals.len() as f64)
}

fn check_equal_dims(set: &[GrayImage], what: &str) -> Result<(usize, usize), MetricError> {
    let first = set.first().ok_or_else(|| MetricError::Empty(what.into()))?;
    let (w, h) = (first.width(), first.height());
    for img in set {
        if img.width() != w || img.height() != h {
            return Err(MetricError::Dim(format!(
                "{what}: {}x{} vs {}x{}",
                img.width(),
                img.height(),
                w,
                h
            )));
        }
    }
    Ok((w, h))
}

/// Per-pixel arithmetic mean; each pixel of the result is the empirical
/// probability of that pixel being active across the set.
pub fn mean_image(set: &[GrayImage]) -> Result<GrayImage, MetricError> {
    let (w, h) = check_equal_dims(set, "mean_image")?;
    let mut acc = vec![0.0f64; w * h];
    for img in set {
        for (a, &v) in acc.iter_mut().zip(img.values()) {
            *a += v;
        }
    }
    let n = set.len() as f64;
    for a in acc.iter_mut() {
        *a /= n;
    }
    Ok(GrayImage::new(w, h, acc)?)
}

/// Per-pixel population variance (divide by N). For binary inputs the result
/// lies in [0, 0.25].
pub fn variance_map(set: &[GrayImage]) -> Result<GrayImage, MetricError> {
    if set.len() < 2 {
        return Err(MetricError::Empty(format!(
            "variance_map needs at least 2 images, got {}",
            set.len()
        )));
    }
    let (w, h) = check_equal_dims(set, "variance_map")?;
    let mean = mean_image(set)?;
    let mut acc = vec![0.0f64; w * h];
    for img in set {
        for ((a, &v), &m) in acc.iter_mut().zip(img.values()).zip(mean.values()) {
            let d = v - m;
            *a += d * d;
        }
    }
    let n = set.len() as f64;
    for a in acc.iter_mut() {
        *a /= n;
    }
    Ok(GrayImage::new(w, h, acc)?)
}

/// Pearson correlation, or None when either input is constant.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        None
    } else {
        Some(sxy / (sxx * syy).sqrt())
    }
}

/// Everything the evaluation pipeline reports for one structure.
#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub structure_id: String,
    /// Mean IoU (percent) under random matching.
    pub iou_random_mean: f64,
    /// Mean IoU (percent) under greedy matching.
    pub iou_greedy_mean: f64,
    /// KL(real mean-image histogram || model mean-image histogram), nats.
    pub kl_real_vs_model: f64,
    /// Mean pairwise 1-D Wasserstein distance, intensity units.
    pub wd_pairwise_mean: f64,
    /// Fréchet distance between embedded feature sets. Not comparable to
    /// pretrained-CNN numbers; the embedder is recorded alongside.
    pub fd: f64,
    pub embedder: String,
    pub m_generated: usize,
    pub n_real: usize,
    pub seed: u64,
    pub bins: usize,
    pub config_digests: BTreeMap<String, String>,
}

/// Compute the full report for one structure: `generated` are raw model
/// outputs in [0,1], `real` are oracle outcomes. Binarization at 0.5 applies
/// to IoU only; the histogram and feature metrics see raw gray values.
pub fn compute_report(
    structure_id: &str,
    generated: &[GrayImage],
    real: &[BitMask],
    bins: usize,
    seed: RngSeed,
    config_digests: BTreeMap<String, String>,
) -> Result<MetricReport, MetricError> {
    if generated.is_empty() {
        return Err(MetricError::Empty("no generated images".into()));
    }
    if real.is_empty() {
        return Err(MetricError::Empty("no real images".into()));
    }
    let preds: Vec<BitMask> =
        generated.iter().map(|g| binarize(g, 0.5)).collect::<Result<_, _>>()?;
    let real_gray: Vec<GrayImage> = real.iter().map(|m| m.to_gray()).collect();

    let iou_random_mean = match_random(&preds, real, seed)?;
    let iou_greedy_mean = match_greedy(&preds, real)?;

    let mean_real = mean_image(&real_gray)?;
    let mean_gen = mean_image(generated)?;
    let p = hist::intensity_histogram(&mean_real, bins, hist::KL_EPSILON);
    let q = hist::intensity_histogram(&mean_gen, bins, hist::KL_EPSILON);
    let kl_real_vs_model = hist::kl_divergence(&p, &q)?;

    let wd = hist::wd_pairwise_mean(generated, &real_gray, bins)?;

    let fa = features::embed_features(generated, features::Embedder::AvgPool8);
    let fb = features::embed_features(&real_gray, features::Embedder::AvgPool8);
    let fd = features::frechet_distance(&fa, &fb)?;

    Ok(MetricReport {
        structure_id: structure_id.to_string(),
        iou_random_mean,
        iou_greedy_mean,
        kl_real_vs_model,
        wd_pairwise_mean: wd,
        fd,
        embedder: "avgpool8".into(),
        m_generated: generated.len(),
        n_real: real.len(),
        seed: seed.0,
        bins,
        config_digests,
    })
}
