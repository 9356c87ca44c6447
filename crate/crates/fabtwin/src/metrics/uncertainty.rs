//! Law-of-total-variance split of predictive variance into the part the
//! stochastic process explains (aleatoric, within-model) and the part model
//! disagreement explains (epistemic, across models).

use super::MetricError;
use crate::raster::GrayImage;

#[derive(Debug, Clone)]
pub struct UncertaintyMaps {
    /// Mean over models of the within-model population variance.
    pub aleatoric: GrayImage,
    /// Population variance of the per-model means.
    pub epistemic: GrayImage,
    /// Population variance of all samples pooled; equals the sum of the other
    /// two exactly when every model contributes the same sample count.
    pub total: GrayImage,
}

/// `samples[k]` holds model k's M outputs. Population estimators throughout,
/// so total = aleatoric + epistemic is an identity rather than an
/// approximation — which is also why ragged sample counts are rejected.
pub fn decompose_uncertainty(samples: &[Vec<GrayImage>]) -> Result<UncertaintyMaps, MetricError> {
    let k = samples.len();
    if k < 2 {
        return Err(MetricError::Empty(format!("need at least 2 models, got {k}")));
    }
    let m = samples[0].len();
    if m == 0 {
        return Err(MetricError::Empty("models contributed no samples".into()));
    }
    for (ki, s) in samples.iter().enumerate() {
        if s.len() != m {
            return Err(MetricError::Invalid(format!(
                "model {ki} has {} samples, model 0 has {m}; equal counts required",
                s.len()
            )));
        }
    }
    let (w, h) = (samples[0][0].width(), samples[0][0].height());
    for s in samples.iter().flatten() {
        if s.width() != w || s.height() != h {
            return Err(MetricError::Dim(format!(
                "{}x{} vs {}x{}",
                s.width(),
                s.height(),
                w,
                h
            )));
        }
    }

    let n = w * h;
    let mut mu = vec![vec![0.0f64; n]; k]; // per-model pixel means
    let mut var = vec![vec![0.0f64; n]; k]; // per-model pixel variances
    for (ki, set) in samples.iter().enumerate() {
        for img in set {
            for (a, &v) in mu[ki].iter_mut().zip(img.values()) {
                *a += v;
            }
        }
        for a in mu[ki].iter_mut() {
            *a /= m as f64;
        }
        for img in set {
            for ((a, &v), &mean) in var[ki].iter_mut().zip(img.values()).zip(&mu[ki]) {
                let d = v - mean;
                *a += d * d;
            }
        }
        for a in var[ki].iter_mut() {
            *a /= m as f64;
        }
    }

    let mut aleatoric = vec![0.0f64; n];
    for v in &var {
        for (a, &x) in aleatoric.iter_mut().zip(v) {
            *a += x;
        }
    }
    for a in aleatoric.iter_mut() {
        *a /= k as f64;
    }

    let mut grand = vec![0.0f64; n];
    for mk in &mu {
        for (g, &x) in grand.iter_mut().zip(mk) {
            *g += x;
        }
    }
    for g in grand.iter_mut() {
        *g /= k as f64;
    }
    let mut epistemic = vec![0.0f64; n];
    for mk in &mu {
        for ((e, &x), &g) in epistemic.iter_mut().zip(mk).zip(&grand) {
            let d = x - g;
            *e += d * d;
        }
    }
    for e in epistemic.iter_mut() {
        *e /= k as f64;
    }

    let mut total = vec![0.0f64; n];
    for set in samples {
        for img in set {
            for ((t, &v), &g) in total.iter_mut().zip(img.values()).zip(&grand) {
                let d = v - g;
                *t += d * d;
            }
        }
    }
    for t in total.iter_mut() {
        *t /= (k * m) as f64;
    }

    Ok(UncertaintyMaps {
        aleatoric: GrayImage::new(w, h, aleatoric)?,
        epistemic: GrayImage::new(w, h, epistemic)?,
        total: GrayImage::new(w, h, total)?,
    })
}
