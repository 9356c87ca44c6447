//! Stochastic process simulator: turns an ideal layout into plausible
//! fabricated outcomes.
//!
//! The pipeline is a level-set model. The mask is jittered by a whole-pixel
//! placement error, smoothed with a Gaussian to mimic process blur, perturbed
//! by a spatially correlated roughness field, and re-thresholded against a
//! per-sample etch bias. Every random stage draws from its own child seed.

use crate::raster::BitMask;
use crate::rng::RngSeed;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FabError {
    #[error("invalid params: {0}")]
    InvalidParams(String),
}

/// Unbounded scalar field sampled on the pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl Field {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct FabParams {
    /// Gaussian process-blur sigma, pixels.
    pub blur_sigma_px: f64,
    /// Mean and spread of the per-sample scalar etch bias. Positive bias
    /// raises the print threshold and shrinks foreground.
    pub etch_bias_mean: f64,
    pub etch_bias_sd: f64,
    /// Amplitude (standard deviation) of the correlated roughness field.
    pub roughness_amp: f64,
    /// Correlation length of the roughness field, pixels.
    pub roughness_corr_px: f64,
    /// Standard deviation of the integer placement jitter, pixels.
    pub jitter_sd_px: f64,
}

impl Default for FabParams {
    fn default() -> Self {
        Self {
            blur_sigma_px: 1.5,
            etch_bias_mean: 0.02,
            etch_bias_sd: 0.02,
            roughness_amp: 0.06,
            roughness_corr_px: 4.0,
            jitter_sd_px: 0.5,
        }
    }
}

impl FabParams {
    pub fn validate(&self) -> Result<(), FabError> {
        if !(self.blur_sigma_px.is_finite() && self.blur_sigma_px > 0.0) {
            return Err(FabError::InvalidParams(format!(
                "blur_sigma_px must be > 0, got {}",
                self.blur_sigma_px
            )));
        }
        if !(self.roughness_corr_px.is_finite() && self.roughness_corr_px > 0.0) {
            return Err(FabError::InvalidParams(format!(
                "roughness_corr_px must be > 0, got {}",
                self.roughness_corr_px
            )));
        }
        for (name, v) in [
            ("etch_bias_mean", self.etch_bias_mean),
            ("etch_bias_sd", self.etch_bias_sd),
            ("roughness_amp", self.roughness_amp),
            ("jitter_sd_px", self.jitter_sd_px),
        ] {
            if !v.is_finite() {
                return Err(FabError::InvalidParams(format!("{name} must be finite, got {v}")));
            }
        }
        if self.etch_bias_sd < 0.0 || self.roughness_amp < 0.0 || self.jitter_sd_px < 0.0 {
            return Err(FabError::InvalidParams("spreads must be >= 0".into()));
        }
        Ok(())
    }
}

/// Discrete Gaussian kernel truncated at 3 sigma and renormalized to sum 1.
fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).floor().max(0.0) as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Mirror indices across the border (…, 1, 0 | 0, 1, …) so constants stay
/// constant under the blur.
#[inline]
fn reflect(mut i: i64, n: usize) -> usize {
    let n = n as i64;
    loop {
        if i < 0 {
            i = -1 - i;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

fn blur_buf(values: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma);
    let radius = kernel.len() as i64 / 2;
    let mut tmp = vec![0.0; values.len()];
    for y in 0..height {
        let row = &values[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (j, &kv) in kernel.iter().enumerate() {
                acc += kv * row[reflect(x as i64 + j as i64 - radius, width)];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; values.len()];
    for x in 0..width {
        for y in 0..height {
            let mut acc = 0.0;
            for (j, &kv) in kernel.iter().enumerate() {
                acc += kv * tmp[reflect(y as i64 + j as i64 - radius, height) * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// Gaussian-blur a binary mask into a continuous coverage field in [0, 1].
pub fn smooth_field(mask: &BitMask, sigma_px: f64) -> Field {
    assert!(sigma_px > 0.0, "sigma must be positive");
    let values: Vec<f64> = mask.bits().iter().map(|&b| b as f64).collect();
    Field {
        width: mask.width(),
        height: mask.height(),
        values: blur_buf(&values, mask.width(), mask.height(), sigma_px),
    }
}

/// Correlated zero-mean roughness: white noise blurred to the correlation
/// length, then rescaled so the empirical mean is exactly 0 and the empirical
/// (population) standard deviation exactly `amp`.
pub fn roughness_field(
    width: usize,
    height: usize,
    corr_px: f64,
    amp: f64,
    seed: RngSeed,
) -> Field {
    assert!(corr_px > 0.0, "correlation length must be positive");
    assert!(amp >= 0.0, "amplitude must be non-negative");
    if amp == 0.0 {
        return Field { width, height, values: vec![0.0; width * height] };
    }
    let mut rng = seed.rng();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let white: Vec<f64> = (0..width * height).map(|_| normal.sample(&mut rng)).collect();
    let mut smooth = blur_buf(&white, width, height, corr_px);
    let n = smooth.len() as f64;
    let mean = smooth.iter().sum::<f64>() / n;
    let var = smooth.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd == 0.0 {
        return Field { width, height, values: vec![0.0; width * height] };
    }
    for v in &mut smooth {
        *v = (*v - mean) / sd * amp;
    }
    Field { width, height, values: smooth }
}

/// One simulated fabrication outcome. Pure in (layout, params, seed).
pub fn fab_sample(layout: &BitMask, params: &FabParams, seed: RngSeed) -> Result<BitMask, FabError> {
    params.validate()?;
    let (w, h) = (layout.width(), layout.height());

    let (dx, dy) = if params.jitter_sd_px > 0.0 {
        let mut rng = seed.child("jitter", 0).rng();
        let normal = Normal::new(0.0, params.jitter_sd_px).expect("validated sd");
        let dx = normal.sample(&mut rng).round() as i64;
        let dy = normal.sample(&mut rng).round() as i64;
        (dx, dy)
    } else {
        (0, 0)
    };
    let placed = if (dx, dy) == (0, 0) { layout.clone() } else { layout.shifted(dx, dy) };

    let coverage = smooth_field(&placed, params.blur_sigma_px);
    let rough = roughness_field(w, h, params.roughness_corr_px, params.roughness_amp, seed.child("rough", 0));

    let bias = if params.etch_bias_sd > 0.0 {
        let mut rng = seed.child("bias", 0).rng();
        Normal::new(params.etch_bias_mean, params.etch_bias_sd)
            .expect("validated sd")
            .sample(&mut rng)
    } else {
        params.etch_bias_mean
    };

    let threshold = 0.5 + bias;
    let bits = coverage
        .values
        .iter()
        .zip(&rough.values)
        .map(|(&f, &r)| u8::from(f + r >= threshold))
        .collect();
    Ok(BitMask::new(w, h, bits).expect("sized to layout"))
}

/// `n` independent outcomes under child seeds `(seed, "fab", i)`.
pub fn fab_batch(
    layout: &BitMask,
    n: usize,
    params: &FabParams,
    seed: RngSeed,
) -> Result<Vec<BitMask>, FabError> {
    params.validate()?;
    (0..n)
        .into_par_iter()
        .map(|i| fab_sample(layout, params, seed.child("fab", i as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::cross_structure;

    fn no_noise(bias: f64, sigma: f64) -> FabParams {
        FabParams {
            blur_sigma_px: sigma,
            etch_bias_mean: bias,
            etch_bias_sd: 0.0,
            roughness_amp: 0.0,
            roughness_corr_px: 1.0,
            jitter_sd_px: 0.0,
        }
    }

    #[test]
    fn blur_preserves_constants() {
        let ones = BitMask::new(16, 16, vec![1; 256]).unwrap();
        let f = smooth_field(&ones, 1.5);
        for &v in &f.values {
            assert!((v - 1.0).abs() < 1e-12, "got {v}");
        }
    }

    #[test]
    fn blur_preserves_interior_mass() {
        let mut m = BitMask::zeros(64, 64);
        for y in 24..40 {
            for x in 20..44 {
                m.set(x, y, 1);
            }
        }
        for &sigma in &[1.0, 1.5, 2.0] {
            let f = smooth_field(&m, sigma);
            let mass: f64 = f.values.iter().sum();
            let expect = m.foreground_count() as f64;
            assert!(
                (mass - expect).abs() / expect < 0.001,
                "sigma {sigma}: mass {mass} vs {expect}"
            );
        }
    }

    #[test]
    fn step_edge_crosses_half_at_the_boundary() {
        // columns >= 32 are foreground; the material boundary sits between
        // pixel centers 31 and 32, so the interpolated value there is 0.5
        // and the profile is antisymmetric around it.
        let mut m = BitMask::zeros(64, 64);
        for y in 0..64 {
            for x in 32..64 {
                m.set(x, y, 1);
            }
        }
        for &sigma in &[1.0, 1.5, 2.5] {
            let f = smooth_field(&m, sigma);
            let lo = f.get(31, 32);
            let hi = f.get(32, 32);
            assert!(lo < 0.5 && hi > 0.5, "sigma {sigma}: {lo} {hi}");
            let mid = 0.5 * (lo + hi);
            assert!((mid - 0.5).abs() <= 0.02, "sigma {sigma}: midpoint {mid}");
        }
    }

    #[test]
    fn roughness_rescale_is_exact() {
        let f = roughness_field(64, 64, 4.0, 0.1, RngSeed(5));
        let n = f.values.len() as f64;
        let mean = f.values.iter().sum::<f64>() / n;
        let sd = (f.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-12);
        assert!((sd - 0.1).abs() < 1e-6);
    }

    #[test]
    fn roughness_zero_amp_is_zero_field() {
        let f = roughness_field(32, 32, 4.0, 0.0, RngSeed(5));
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn roughness_correlation_grows_with_corr_len() {
        let lag1 = |f: &Field| {
            let mut num = 0.0;
            let mut den = 0.0;
            for y in 0..f.height {
                for x in 0..f.width - 1 {
                    num += f.get(x, y) * f.get(x + 1, y);
                }
                for x in 0..f.width {
                    den += f.get(x, y) * f.get(x, y);
                }
            }
            num / den
        };
        let r1 = lag1(&roughness_field(96, 96, 1.0, 0.1, RngSeed(8)));
        let r4 = lag1(&roughness_field(96, 96, 4.0, 0.1, RngSeed(8)));
        let r16 = lag1(&roughness_field(96, 96, 16.0, 0.1, RngSeed(8)));
        assert!(r1 < r4 && r4 < r16, "autocorr not increasing: {r1} {r4} {r16}");
    }

    #[test]
    fn fab_sample_is_pure() {
        let layout = cross_structure(64, 50, 12);
        let p = FabParams::default();
        let a = fab_sample(&layout, &p, RngSeed(3)).unwrap();
        let b = fab_sample(&layout, &p, RngSeed(3)).unwrap();
        assert_eq!(a, b);
        let c = fab_sample(&layout, &p, RngSeed(4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn batch_of_one_matches_child_zero() {
        let layout = cross_structure(64, 50, 12);
        let p = FabParams::default();
        let batch = fab_batch(&layout, 1, &p, RngSeed(77)).unwrap();
        let single = fab_sample(&layout, &p, RngSeed(77).child("fab", 0)).unwrap();
        assert_eq!(batch[0], single);
    }

    #[test]
    fn etch_bias_monotonically_shrinks_foreground() {
        let layout = cross_structure(256, 200, 100);
        let mut last = usize::MAX;
        for &bias in &[-0.2, -0.1, 0.0, 0.1, 0.2] {
            let out = fab_sample(&layout, &no_noise(bias, 1.5), RngSeed(0)).unwrap();
            let area = out.foreground_count();
            assert!(area <= last, "area grew at bias {bias}: {area} > {last}");
            last = area;
        }
        // strict at the extremes for this geometry
        let grown = fab_sample(&layout, &no_noise(-0.2, 1.5), RngSeed(0)).unwrap();
        let shrunk = fab_sample(&layout, &no_noise(0.2, 1.5), RngSeed(0)).unwrap();
        assert!(shrunk.foreground_count() < grown.foreground_count());
    }

    #[test]
    fn noiseless_run_only_moves_boundary_pixels() {
        let layout = cross_structure(256, 200, 100);
        let out = fab_sample(&layout, &no_noise(0.0, 1.0), RngSeed(0)).unwrap();
        let band = crate::morph::boundary_band(&layout, 2);
        for y in 0..256 {
            for x in 0..256 {
                if out.get(x, y) != layout.get(x, y) {
                    assert_eq!(band.get(x, y), 1, "unexpected flip at ({x},{y})");
                }
            }
        }
    }

    #[test]
    fn variance_concentrates_at_edges() {
        let layout = cross_structure(64, 50, 12);
        let params = FabParams {
            blur_sigma_px: 1.0,
            roughness_corr_px: 2.0,
            ..FabParams::default()
        };
        let samples = fab_batch(&layout, 100, &params, RngSeed(13)).unwrap();
        let n = samples.len() as f64;
        let mut var = vec![0.0f64; 64 * 64];
        for (i, v) in var.iter_mut().enumerate() {
            let mean = samples.iter().map(|s| s.bits()[i] as f64).sum::<f64>() / n;
            *v = samples.iter().map(|s| (s.bits()[i] as f64 - mean).powi(2)).sum::<f64>() / n;
        }
        let edge = crate::morph::boundary_band(&layout, 2);
        // interior: farther than 3*sigma + 3*corr from any boundary
        let margin = (3.0 * params.blur_sigma_px + 3.0 * params.roughness_corr_px).ceil() as usize;
        let far = crate::morph::boundary_band(&layout, margin);
        let mut edge_sum = 0.0;
        let mut edge_n = 0.0;
        let mut int_sum = 0.0;
        let mut int_n = 0.0;
        for i in 0..var.len() {
            if edge.bits()[i] == 1 {
                edge_sum += var[i];
                edge_n += 1.0;
            } else if far.bits()[i] == 0 {
                int_sum += var[i];
                int_n += 1.0;
            }
        }
        let edge_mean = edge_sum / edge_n;
        let int_mean = int_sum / int_n;
        assert!(
            edge_mean >= 10.0 * int_mean,
            "edge {edge_mean} vs interior {int_mean}"
        );
        assert!(edge_mean > 0.0);
    }

    #[test]
    fn mean_over_many_samples_is_four_fold_symmetric() {
        // even-width cross on an even canvas is exactly rot90-invariant,
        // jitter off; the sample mean must inherit the symmetry
        let layout = cross_structure(64, 50, 12);
        assert_eq!(layout.rot90cw(), layout);
        let params = FabParams {
            blur_sigma_px: 1.0,
            roughness_corr_px: 2.0,
            jitter_sd_px: 0.0,
            ..FabParams::default()
        };
        let n = 4000usize;
        let samples = fab_batch(&layout, n, &params, RngSeed(99)).unwrap();
        let mut mean = vec![0.0f64; 64 * 64];
        for s in &samples {
            for (m, &b) in mean.iter_mut().zip(s.bits()) {
                *m += b as f64;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut worst = 0.0f64;
        for y in 0..64 {
            for x in 0..64 {
                // rot90cw sends (x, y) to (63 - y, x)
                let rotated = mean[x * 64 + (63 - y)];
                worst = worst.max((mean[y * 64 + x] - rotated).abs());
            }
        }
        assert!(worst <= 0.05, "max asymmetry {worst}");
    }
}
