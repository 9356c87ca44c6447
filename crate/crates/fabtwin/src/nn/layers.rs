//! Convolution, normalization, activation, and dropout primitives with
//! hand-derived backward passes. Convolutions are lowered to matrix products
//! (im2col); both directions reuse the same gather so forward and backward
//! stay structurally consistent.

use super::tensor::{matmul, Tensor};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

pub const WEIGHT_INIT_SD: f64 = 0.02;
pub const NORM_EPS: f64 = 1e-5;

/// Gather sliding-window patches of `t` onto a `(c*k*k) x (gh*gw)` matrix,
/// where grid position (gy, gx) reads input pixel (gy*s - p + ky, gx*s - p + kx).
/// Out-of-bounds reads are zero.
fn im2col(t: &Tensor, k: usize, s: usize, p: i64, gh: usize, gw: usize) -> Vec<f64> {
    let n = gh * gw;
    let mut cols = vec![0.0; t.c * k * k * n];
    for c in 0..t.c {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * n;
                for gy in 0..gh {
                    let iy = gy as i64 * s as i64 - p + ky as i64;
                    if iy < 0 || iy >= t.h as i64 {
                        continue;
                    }
                    let src = (c * t.h + iy as usize) * t.w;
                    let dst = row + gy * gw;
                    for gx in 0..gw {
                        let ix = gx as i64 * s as i64 - p + kx as i64;
                        if ix < 0 || ix >= t.w as i64 {
                            continue;
                        }
                        cols[dst + gx] = t.data[src + ix as usize];
                    }
                }
            }
        }
    }
    cols
}

/// Scatter-add the transpose of `im2col`: column matrix entries flow back to
/// the tensor positions they were gathered from.
fn col2im_add(cols: &[f64], c: usize, k: usize, s: usize, p: i64, gh: usize, gw: usize, out: &mut Tensor) {
    let n = gh * gw;
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((ch * k + ky) * k + kx) * n;
                for gy in 0..gh {
                    let oy = gy as i64 * s as i64 - p + ky as i64;
                    if oy < 0 || oy >= out.h as i64 {
                        continue;
                    }
                    let dst = (ch * out.h + oy as usize) * out.w;
                    let src = row + gy * gw;
                    for gx in 0..gw {
                        let ox = gx as i64 * s as i64 - p + kx as i64;
                        if ox < 0 || ox >= out.w as i64 {
                            continue;
                        }
                        out.data[dst + ox as usize] += cols[src + gx];
                    }
                }
            }
        }
    }
}

fn upcast(w: &[f32]) -> Vec<f64> {
    w.iter().map(|&v| v as f64).collect()
}

fn init_params(rng: &mut ChaCha12Rng, wlen: usize, blen: usize) -> (Vec<f32>, Vec<f32>) {
    let normal = Normal::new(0.0, WEIGHT_INIT_SD).expect("init sd");
    let w = (0..wlen).map(|_| normal.sample(rng) as f32).collect();
    (w, vec![0.0; blen])
}

/// Strided 2-D convolution; weights laid out `[co][ci][k][k]`.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub ci: usize,
    pub co: usize,
    pub k: usize,
    pub s: usize,
    pub p: i64,
    pub w: Vec<f32>,
    pub b: Vec<f32>,
}

impl Conv2d {
    pub fn new(ci: usize, co: usize, k: usize, s: usize, p: i64, rng: &mut ChaCha12Rng) -> Self {
        let (w, b) = init_params(rng, co * ci * k * k, co);
        Self { ci, co, k, s, p, w, b }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let oh = (h as i64 + 2 * self.p - self.k as i64).div_euclid(self.s as i64) + 1;
        let ow = (w as i64 + 2 * self.p - self.k as i64).div_euclid(self.s as i64) + 1;
        (oh > 0 && ow > 0).then_some((oh as usize, ow as usize))
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        debug_assert_eq!(x.c, self.ci);
        let (oh, ow) = self.out_hw(x.h, x.w).expect("valid output size");
        let n = oh * ow;
        let cols = im2col(x, self.k, self.s, self.p, oh, ow);
        let mut out = Tensor::zeros(self.co, oh, ow);
        matmul(&upcast(&self.w), &cols, &mut out.data, self.co, self.ci * self.k * self.k, n);
        for co in 0..self.co {
            let b = self.b[co] as f64;
            for v in &mut out.data[co * n..(co + 1) * n] {
                *v += b;
            }
        }
        out
    }

    /// Accumulates parameter gradients into `grads` when given; returns the
    /// input gradient when requested.
    pub fn backward(
        &self,
        x: &Tensor,
        dy: &Tensor,
        grads: Option<(&mut [f64], &mut [f64])>,
        want_dx: bool,
    ) -> Option<Tensor> {
        let (oh, ow) = (dy.h, dy.w);
        let n = oh * ow;
        let kk = self.ci * self.k * self.k;

        if let Some((gw, gb)) = grads {
            let cols = im2col(x, self.k, self.s, self.p, oh, ow);
            // dW = dY * cols^T
            let mut colst = vec![0.0; cols.len()];
            transpose(&cols, &mut colst, kk, n);
            let mut dw = vec![0.0; self.co * kk];
            matmul(&dy.data, &colst, &mut dw, self.co, n, kk);
            for (a, d) in gw.iter_mut().zip(&dw) {
                *a += d;
            }
            for co in 0..self.co {
                gb[co] += dy.data[co * n..(co + 1) * n].iter().sum::<f64>();
            }
        }

        if !want_dx {
            return None;
        }
        // dcols = W^T * dY, scattered back through the gather
        let wt = {
            let w = upcast(&self.w);
            let mut wt = vec![0.0; w.len()];
            transpose(&w, &mut wt, self.co, kk);
            wt
        };
        let mut dcols = vec![0.0; kk * n];
        matmul(&wt, &dy.data, &mut dcols, kk, self.co, n);
        let mut dx = Tensor::zeros(x.c, x.h, x.w);
        col2im_add(&dcols, self.ci, self.k, self.s, self.p, oh, ow, &mut dx);
        Some(dx)
    }
}

/// Strided transposed convolution; weights laid out `[ci][co][k][k]`.
/// Output side is `(h - 1) * s - 2p + k`.
#[derive(Debug, Clone)]
pub struct ConvT2d {
    pub ci: usize,
    pub co: usize,
    pub k: usize,
    pub s: usize,
    pub p: i64,
    pub w: Vec<f32>,
    pub b: Vec<f32>,
}

impl ConvT2d {
    pub fn new(ci: usize, co: usize, k: usize, s: usize, p: i64, rng: &mut ChaCha12Rng) -> Self {
        let (w, b) = init_params(rng, ci * co * k * k, co);
        Self { ci, co, k, s, p, w, b }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let oh = (h as i64 - 1) * self.s as i64 - 2 * self.p + self.k as i64;
        let ow = (w as i64 - 1) * self.s as i64 - 2 * self.p + self.k as i64;
        assert!(oh > 0 && ow > 0, "degenerate transposed-conv output");
        (oh as usize, ow as usize)
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        debug_assert_eq!(x.c, self.ci);
        let (oh, ow) = self.out_hw(x.h, x.w);
        let n_in = x.h * x.w;
        let kk = self.co * self.k * self.k;
        // cols = W^T(kk x ci) * X(ci x n_in), scattered onto the output grid
        let wt = {
            let w = upcast(&self.w);
            let mut wt = vec![0.0; w.len()];
            transpose(&w, &mut wt, self.ci, kk);
            wt
        };
        let mut cols = vec![0.0; kk * n_in];
        matmul(&wt, &x.data, &mut cols, kk, self.ci, n_in);
        let mut out = Tensor::zeros(self.co, oh, ow);
        col2im_add(&cols, self.co, self.k, self.s, self.p, x.h, x.w, &mut out);
        for co in 0..self.co {
            let b = self.b[co] as f64;
            for v in &mut out.data[co * oh * ow..(co + 1) * oh * ow] {
                *v += b;
            }
        }
        out
    }

    pub fn backward(
        &self,
        x: &Tensor,
        dy: &Tensor,
        grads: Option<(&mut [f64], &mut [f64])>,
        want_dx: bool,
    ) -> Option<Tensor> {
        let n_in = x.h * x.w;
        let n_out = dy.h * dy.w;
        let kk = self.co * self.k * self.k;
        // gather dY at the scatter targets: same access pattern as forward
        let dcols = im2col(dy, self.k, self.s, self.p, x.h, x.w);

        if let Some((gw, gb)) = grads {
            // dW(ci x kk) = X(ci x n_in) * dcols^T(n_in x kk)
            let mut dcolst = vec![0.0; dcols.len()];
            transpose(&dcols, &mut dcolst, kk, n_in);
            let mut dw = vec![0.0; self.ci * kk];
            matmul(&x.data, &dcolst, &mut dw, self.ci, n_in, kk);
            for (a, d) in gw.iter_mut().zip(&dw) {
                *a += d;
            }
            for co in 0..self.co {
                gb[co] += dy.data[co * n_out..(co + 1) * n_out].iter().sum::<f64>();
            }
        }

        if !want_dx {
            return None;
        }
        // dX(ci x n_in) = W(ci x kk) * dcols(kk x n_in)
        let mut dx = Tensor::zeros(x.c, x.h, x.w);
        matmul(&upcast(&self.w), &dcols, &mut dx.data, self.ci, kk, n_in);
        Some(dx)
    }
}

fn transpose(src: &[f64], dst: &mut [f64], rows: usize, cols: usize) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

/// Per-channel normalization over the spatial extent (no affine part).
/// Returns the normalized tensor and 1/sqrt(var + eps) per channel.
pub fn instance_norm(x: &Tensor) -> (Tensor, Vec<f64>) {
    let n = (x.h * x.w) as f64;
    let mut out = Tensor::zeros(x.c, x.h, x.w);
    let mut inv_std = Vec::with_capacity(x.c);
    for c in 0..x.c {
        let ch = &x.data[c * x.h * x.w..(c + 1) * x.h * x.w];
        let mean = ch.iter().sum::<f64>() / n;
        let var = ch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + NORM_EPS).sqrt();
        inv_std.push(inv);
        for (o, &v) in out.data[c * x.h * x.w..(c + 1) * x.h * x.w].iter_mut().zip(ch) {
            *o = (v - mean) * inv;
        }
    }
    (out, inv_std)
}

pub fn instance_norm_backward(xhat: &Tensor, inv_std: &[f64], dy: &Tensor) -> Tensor {
    let n = (xhat.h * xhat.w) as f64;
    let mut dx = Tensor::zeros(xhat.c, xhat.h, xhat.w);
    for c in 0..xhat.c {
        let span = c * xhat.h * xhat.w..(c + 1) * xhat.h * xhat.w;
        let xh = &xhat.data[span.clone()];
        let g = &dy.data[span.clone()];
        let mean_g = g.iter().sum::<f64>() / n;
        let mean_gx = g.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / n;
        for ((d, &gv), &xv) in dx.data[span].iter_mut().zip(g).zip(xh) {
            *d = inv_std[c] * (gv - mean_g - xv * mean_gx);
        }
    }
    dx
}

pub fn leaky_relu(x: &Tensor, slope: f64) -> Tensor {
    let data = x.data.iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect();
    Tensor { c: x.c, h: x.h, w: x.w, data }
}

pub fn leaky_relu_backward(dy: &Tensor, x: &Tensor, slope: f64) -> Tensor {
    let data = dy
        .data
        .iter()
        .zip(&x.data)
        .map(|(&g, &v)| if v > 0.0 { g } else { slope * g })
        .collect();
    Tensor { c: x.c, h: x.h, w: x.w, data }
}

pub fn relu(x: &Tensor) -> Tensor {
    leaky_relu(x, 0.0)
}

pub fn relu_backward(dy: &Tensor, x: &Tensor) -> Tensor {
    leaky_relu_backward(dy, x, 0.0)
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    let data = x.data.iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect();
    Tensor { c: x.c, h: x.h, w: x.w, data }
}

/// Backward through sigmoid given its cached output.
pub fn sigmoid_backward(dy: &Tensor, y: &Tensor) -> Tensor {
    let data = dy.data.iter().zip(&y.data).map(|(&g, &s)| g * s * (1.0 - s)).collect();
    Tensor { c: y.c, h: y.h, w: y.w, data }
}

/// Inverted dropout: kept activations are scaled by 1/(1-p) so the expected
/// value is unchanged. Returns the applied mask for the backward pass.
pub fn dropout(x: &Tensor, p: f64, rng: &mut ChaCha12Rng) -> (Tensor, Vec<f64>) {
    debug_assert!((0.0..1.0).contains(&p));
    let keep_scale = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep_scale })
        .collect();
    let data = x.data.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    (Tensor { c: x.c, h: x.h, w: x.w, data }, mask)
}

pub fn apply_mask(dy: &Tensor, mask: &[f64]) -> Tensor {
    let data = dy.data.iter().zip(mask).map(|(&g, &m)| g * m).collect();
    Tensor { c: dy.c, h: dy.h, w: dy.w, data }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngSeed;

    fn rng() -> ChaCha12Rng {
        RngSeed(7).rng()
    }

    #[test]
    fn conv_output_shapes() {
        let c = Conv2d::new(1, 2, 4, 2, 1, &mut rng());
        assert_eq!(c.out_hw(256, 256), Some((128, 128)));
        let c1 = Conv2d { s: 1, ..c.clone() };
        assert_eq!(c1.out_hw(32, 32), Some((31, 31)));
        assert_eq!(c1.out_hw(1, 1), None);
    }

    #[test]
    fn transposed_conv_doubles_spatial_size() {
        let c = ConvT2d::new(3, 2, 4, 2, 1, &mut rng());
        assert_eq!(c.out_hw(1, 1), (2, 2));
        assert_eq!(c.out_hw(16, 16), (32, 32));
    }

    #[test]
    fn conv_matches_direct_computation() {
        // 1 channel, 3x3 input, 2x2 kernel, stride 1, no padding
        let mut c = Conv2d::new(1, 1, 2, 1, 0, &mut rng());
        c.w = vec![1.0, 2.0, 3.0, 4.0];
        c.b = vec![0.5];
        let x = Tensor { c: 1, h: 3, w: 3, data: (1..=9).map(|v| v as f64).collect() };
        let y = c.forward(&x);
        assert_eq!((y.h, y.w), (2, 2));
        // window at (0,0): 1*1 + 2*2 + 3*4 + 4*5 = 37
        assert!((y.data[0] - 37.5).abs() < 1e-12);
        // window at (1,1): 5 + 2*6 + 3*8 + 4*9 = 77
        assert!((y.data[3] - 77.5).abs() < 1e-12);
    }

    #[test]
    fn transposed_conv_is_adjoint_of_conv() {
        // <conv(x), y> == <x, convT(y)> when convT shares the (flipped) role
        let mut fwd = Conv2d::new(2, 3, 4, 2, 1, &mut rng());
        let x = Tensor {
            c: 2,
            h: 8,
            w: 8,
            data: (0..128).map(|i| ((i * 37) % 11) as f64 - 5.0).collect(),
        };
        let y = fwd.forward(&x);
        // zero bias to make the pairing exact
        fwd.b = vec![0.0; 3];
        let y2 = fwd.forward(&x);
        let g = Tensor {
            c: 3,
            h: y.h,
            w: y.w,
            data: (0..3 * y.h * y.w).map(|i| ((i * 13) % 7) as f64 - 3.0).collect(),
        };
        // adjoint via Conv2d::backward input gradient
        let dx = fwd.backward(&x, &g, None, true).unwrap();
        let lhs: f64 = y2.data.iter().zip(&g.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data.iter().zip(&dx.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn instance_norm_standardizes_channels() {
        let x = Tensor { c: 2, h: 2, w: 2, data: vec![1.0, 2.0, 3.0, 4.0, -1.0, -1.0, -1.0, -1.0] };
        let (y, inv) = instance_norm(&x);
        let ch0 = &y.data[..4];
        let mean: f64 = ch0.iter().sum::<f64>() / 4.0;
        let var: f64 = ch0.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-4); // eps slightly shrinks the variance
        // constant channel maps to zeros instead of blowing up
        assert!(y.data[4..].iter().all(|&v| v == 0.0));
        assert!(inv[1].is_finite());
    }

    #[test]
    fn dropout_scales_survivors() {
        let x = Tensor { c: 1, h: 8, w: 8, data: vec![1.0; 64] };
        let mut r = rng();
        let (y, mask) = dropout(&x, 0.5, &mut r);
        for (&v, &m) in y.data.iter().zip(&mask) {
            assert!(v == 0.0 || (v - 2.0).abs() < 1e-12);
            assert_eq!(v, m);
        }
        let kept = y.data.iter().filter(|&&v| v != 0.0).count();
        assert!(kept > 10 && kept < 54, "suspicious keep count {kept}");
    }

    #[test]
    fn activations_match_definitions() {
        let x = Tensor { c: 1, h: 1, w: 3, data: vec![-2.0, 0.0, 3.0] };
        let l = leaky_relu(&x, 0.2);
        assert_eq!(l.data, vec![-0.4, 0.0, 3.0]);
        let s = sigmoid(&x);
        assert!((s.data[1] - 0.5).abs() < 1e-12);
        assert!(s.data[0] < 0.5 && s.data[2] > 0.5);
    }
}
