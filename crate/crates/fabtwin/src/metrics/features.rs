//! Fixed, dependency-free image embeddings and the Fréchet distance between
//! embedded sets. Values are not comparable to pretrained-CNN pipelines; the
//! report records which embedder produced them.

use super::MetricError;
use crate::raster::GrayImage;
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Embedder {
    /// Average-pool onto an 8x8 grid; 64-d rows.
    AvgPool8,
    /// Block-mean downsample to 16x16; 256-d rows.
    Pixels16,
}

impl Embedder {
    pub fn dim(&self) -> usize {
        match self {
            Embedder::AvgPool8 => 64,
            Embedder::Pixels16 => 256,
        }
    }

    fn grid(&self) -> usize {
        match self {
            Embedder::AvgPool8 => 8,
            Embedder::Pixels16 => 16,
        }
    }
}

/// Mean over the pixel block that cell (gx, gy) of a g x g grid covers.
fn pool_grid(img: &GrayImage, g: usize) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let mut out = Vec::with_capacity(g * g);
    for gy in 0..g {
        let y0 = gy * h / g;
        let y1 = (((gy + 1) * h).div_ceil(g)).min(h).max(y0 + 1);
        for gx in 0..g {
            let x0 = gx * w / g;
            let x1 = (((gx + 1) * w).div_ceil(g)).min(w).max(x0 + 1);
            let mut sum = 0.0;
            for y in y0..y1 {
                for x in x0..x1 {
                    sum += img.get(x.min(w - 1), y.min(h - 1));
                }
            }
            out.push(sum / ((y1 - y0) * (x1 - x0)) as f64);
        }
    }
    out
}

/// One feature row per image.
pub fn embed_features(set: &[GrayImage], embedder: Embedder) -> Vec<Vec<f64>> {
    set.iter().map(|img| pool_grid(img, embedder.grid())).collect()
}

fn mean_and_cov(rows: &[Vec<f64>], dim: usize) -> (DVector<f64>, DMatrix<f64>) {
    let n = rows.len();
    let mut mu = DVector::zeros(dim);
    for r in rows {
        for (i, &v) in r.iter().enumerate() {
            mu[i] += v;
        }
    }
    mu /= n as f64;
    let mut cov = DMatrix::zeros(dim, dim);
    for r in rows {
        let d = DVector::from_iterator(dim, r.iter().cloned()) - &mu;
        cov += &d * d.transpose();
    }
    cov /= (n - 1) as f64;
    (mu, cov)
}

/// Symmetric positive-semidefinite square root; eigenvalues below 1e-10 are
/// treated as exact zeros.
fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let roots: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| if l < 1e-10 { 0.0 } else { l.sqrt() })
        .collect();
    let d = DMatrix::from_diagonal(&DVector::from_vec(roots));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Fréchet distance between Gaussian fits of two feature sets:
/// ‖μa − μb‖² + Tr(Σa) + Tr(Σb) − 2·Tr((Σa^{1/2} Σb Σa^{1/2})^{1/2}).
pub fn frechet_distance(feat_a: &[Vec<f64>], feat_b: &[Vec<f64>]) -> Result<f64, MetricError> {
    for (name, f) in [("first", feat_a), ("second", feat_b)] {
        if f.len() < 2 {
            return Err(MetricError::Empty(format!(
                "{name} set needs >= 2 rows for a covariance, got {}",
                f.len()
            )));
        }
        if f.iter().flatten().any(|v| !v.is_finite()) {
            return Err(MetricError::Invalid(format!("non-finite feature in {name} set")));
        }
    }
    let dim = feat_a[0].len();
    for r in feat_a.iter().chain(feat_b) {
        if r.len() != dim {
            return Err(MetricError::Dim(format!(
                "feature rows of width {} and {}",
                dim,
                r.len()
            )));
        }
    }

    let (mu_a, cov_a) = mean_and_cov(feat_a, dim);
    let (mu_b, cov_b) = mean_and_cov(feat_b, dim);

    let diff = &mu_a - &mu_b;
    let mean_term = diff.dot(&diff);

    let a_half = sym_sqrt(&cov_a);
    let inner = &a_half * &cov_b * &a_half;
    // Tr(M^{1/2}) = sum of sqrt eigenvalues; no need to rebuild the matrix
    let eig = inner.symmetric_eigen();
    let cross: f64 = eig
        .eigenvalues
        .iter()
        .map(|&l| if l < 1e-10 { 0.0 } else { l.sqrt() })
        .sum();

    let fd = mean_term + cov_a.trace() + cov_b.trace() - 2.0 * cross;
    Ok(fd.max(0.0))
}
