//! Minimal CHW tensor used by the network stack. Arithmetic runs in f64;
//! parameters are stored as f32 (the checkpoint payload type) and upcast on
//! use, so a saved model reproduces its forward pass bit for bit.

use crate::raster::{BitMask, GrayImage};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w, data: vec![0.0; c * h * w] }
    }

    pub fn from_mask(mask: &BitMask) -> Self {
        Self {
            c: 1,
            h: mask.height(),
            w: mask.width(),
            data: mask.bits().iter().map(|&b| b as f64).collect(),
        }
    }

    pub fn from_gray(img: &GrayImage) -> Self {
        Self { c: 1, h: img.height(), w: img.width(), data: img.values().to_vec() }
    }

    /// Single-channel tensor to image; values are clamped into [0, 1] to
    /// absorb rounding at the representation boundary.
    pub fn to_gray(&self) -> GrayImage {
        assert_eq!(self.c, 1, "expected single-channel tensor");
        let values = self.data.iter().map(|&v| v.clamp(0.0, 1.0)).collect();
        GrayImage::new(self.w, self.h, values).expect("clamped values are valid")
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Broadcast a latent vector to a constant spatial map, one channel per
    /// component.
    pub fn tile_latent(z: &[f64], h: usize, w: usize) -> Self {
        let mut t = Tensor::zeros(z.len(), h, w);
        for (ch, &v) in z.iter().enumerate() {
            t.data[ch * h * w..(ch + 1) * h * w].fill(v);
        }
        t
    }

    pub fn concat_channels(a: &Tensor, b: &Tensor) -> Tensor {
        assert_eq!((a.h, a.w), (b.h, b.w), "spatial dims must match");
        let mut data = Vec::with_capacity((a.c + b.c) * a.h * a.w);
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        Tensor { c: a.c + b.c, h: a.h, w: a.w, data }
    }

    pub fn split_channels(&self, first: usize) -> (Tensor, Tensor) {
        assert!(first <= self.c);
        let cut = first * self.h * self.w;
        (
            Tensor { c: first, h: self.h, w: self.w, data: self.data[..cut].to_vec() },
            Tensor { c: self.c - first, h: self.h, w: self.w, data: self.data[cut..].to_vec() },
        )
    }
}

/// c = a(m x k) * b(k x n), overwriting c.
pub fn matmul(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let av = ndarray::ArrayView2::from_shape((m, k), a).expect("a shape");
    let bv = ndarray::ArrayView2::from_shape((k, n), b).expect("b shape");
    let mut cv = ndarray::ArrayViewMut2::from_shape((m, n), c).expect("c shape");
    ndarray::linalg::general_mat_mul(1.0, &av, &bv, 0.0, &mut cv);
}
