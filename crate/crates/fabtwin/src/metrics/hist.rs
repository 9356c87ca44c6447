//! Intensity histograms over [0,1] and the divergences computed on them.

use super::MetricError;
use crate::raster::GrayImage;

/// Default bin count: the imagery is 8-bit at heart.
pub const DEFAULT_BINS: usize = 256;
/// Smoothing used before KL so every model bin is positive. Mass transport
/// (Wasserstein) runs unsmoothed.
pub const KL_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// Normalized mass per bin; sums to 1.
    pub mass: Vec<f64>,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.mass.len()
    }

    pub fn bin_width(&self) -> f64 {
        1.0 / self.mass.len() as f64
    }
}

/// Histogram of pixel intensities over uniform bins spanning [0,1]; the last
/// bin includes its right edge. Every bin gets `epsilon` added before the
/// final normalization.
pub fn intensity_histogram(img: &GrayImage, bins: usize, epsilon: f64) -> Histogram {
    assert!(bins >= 2, "need at least 2 bins");
    assert!(epsilon >= 0.0);
    let mut counts = vec![0usize; bins];
    for &v in img.values() {
        let idx = ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let total = img.values().len() as f64;
    let denom = 1.0 + bins as f64 * epsilon;
    let mass = counts
        .iter()
        .map(|&c| (c as f64 / total + epsilon) / denom)
        .collect();
    Histogram { mass }
}

fn check_binning(p: &Histogram, q: &Histogram) -> Result<(), MetricError> {
    if p.bins() != q.bins() {
        return Err(MetricError::Binning(format!("{} bins vs {} bins", p.bins(), q.bins())));
    }
    Ok(())
}

/// KL(P || Q) in nats with the 0·ln 0 = 0 convention. Positive P mass on a
/// zero Q bin yields +inf; smooth Q first when that matters.
pub fn kl_divergence(p: &Histogram, q: &Histogram) -> Result<f64, MetricError> {
    check_binning(p, q)?;
    let mut sum = 0.0;
    for (&pi, &qi) in p.mass.iter().zip(&q.mass) {
        if pi <= 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Ok(f64::INFINITY);
        }
        sum += pi * (pi / qi).ln();
    }
    // fp noise can push a true 0 barely negative
    Ok(sum.max(0.0))
}

/// 1-D Wasserstein distance via the CDF form, which is the exact optimum of
/// the transport problem on the line: Σ |CDF_P − CDF_Q| · bin_width.
pub fn wasserstein_1d(p: &Histogram, q: &Histogram) -> Result<f64, MetricError> {
    check_binning(p, q)?;
    let mut cp = 0.0;
    let mut cq = 0.0;
    let mut sum = 0.0;
    for (&pi, &qi) in p.mass.iter().zip(&q.mass) {
        cp += pi;
        cq += qi;
        sum += (cp - cq).abs();
    }
    Ok(sum * p.bin_width())
}

/// Mean Wasserstein distance over every (generated, real) pair of per-image
/// histograms, unsmoothed.
pub fn wd_pairwise_mean(
    gen_set: &[GrayImage],
    real_set: &[GrayImage],
    bins: usize,
) -> Result<f64, MetricError> {
    if gen_set.is_empty() || real_set.is_empty() {
        return Err(MetricError::Empty("wd_pairwise_mean needs both sets".into()));
    }
    let gh: Vec<Histogram> = gen_set.iter().map(|g| intensity_histogram(g, bins, 0.0)).collect();
    let rh: Vec<Histogram> = real_set.iter().map(|r| intensity_histogram(r, bins, 0.0)).collect();
    let mut sum = 0.0;
    for g in &gh {
        for r in &rh {
            sum += wasserstein_1d(g, r)?;
        }
    }
    Ok(sum / (gh.len() * rh.len()) as f64)
}
