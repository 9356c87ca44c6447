//! Shared encoder/decoder trunk for the generator and U-Net variants: a
//! stride-2 conv ladder down, transposed-conv ladder up, skip concatenations
//! at matching resolutions, optional latent concatenation at the bottleneck,
//! and optional dropout after the deepest decoder blocks.
//!
//! The forward pass caches every intermediate needed by the hand-derived
//! backward pass, which walks the decoder splitting concatenation gradients
//! and the encoder accumulating skip gradients.

use super::layers::{
    apply_mask, dropout, instance_norm, instance_norm_backward, leaky_relu, leaky_relu_backward,
    relu, relu_backward, sigmoid, sigmoid_backward, Conv2d, ConvT2d,
};
use super::tensor::Tensor;
use rand_chacha::ChaCha12Rng;

pub const LEAKY_SLOPE: f64 = 0.2;

/// Channel width at encoder level `i`, capped at 8x the base.
pub fn level_channels(base_width: usize, i: usize) -> usize {
    (base_width << i.min(3)).min(base_width * 8)
}

#[derive(Debug, Clone)]
pub struct Core {
    pub depth: usize,
    pub base_width: usize,
    pub latent_dim: usize,
    pub dropout_p: f64,
    /// Decoder blocks (execution order) followed by dropout.
    pub dropout_blocks: Vec<usize>,
    /// Encoder convs, shallow to deep. Block 0 is conv-only; the deepest is
    /// pre-activated but unnormalized; the rest are pre-act + conv + norm.
    pub enc: Vec<Conv2d>,
    /// Decoder transposed convs in execution order (index 0 is deepest).
    /// All but the last are followed by instance norm; the last by sigmoid.
    pub dec: Vec<ConvT2d>,
}

impl Core {
    pub fn new(
        depth: usize,
        base_width: usize,
        latent_dim: usize,
        dropout_p: f64,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        assert!(depth >= 2 && base_width >= 1);
        let c = |i: usize| level_channels(base_width, i);
        let mut enc = Vec::with_capacity(depth);
        for i in 0..depth {
            let ci = if i == 0 { 1 } else { c(i - 1) };
            enc.push(Conv2d::new(ci, c(i), 4, 2, 1, rng));
        }
        let mut dec = Vec::with_capacity(depth);
        for j in 0..depth {
            let lvl = depth - 1 - j;
            let ci = if j == 0 { c(depth - 1) + latent_dim } else { 2 * c(lvl) };
            let co = if lvl == 0 { 1 } else { c(lvl - 1) };
            dec.push(ConvT2d::new(ci, co, 4, 2, 1, rng));
        }
        // dropout follows the first three decoder blocks, never the output one
        let dropout_blocks = if dropout_p > 0.0 {
            (0..3).filter(|&j| j + 1 < depth).collect()
        } else {
            Vec::new()
        };
        Self { depth, base_width, latent_dim, dropout_p, dropout_blocks, enc, dec }
    }

    pub fn param_count(&self) -> usize {
        self.enc.iter().map(|l| l.w.len() + l.b.len()).sum::<usize>()
            + self.dec.iter().map(|l| l.w.len() + l.b.len()).sum::<usize>()
    }

    /// Parameter tensors in a fixed order (encoder w,b pairs then decoder
    /// w,b pairs); gradient containers follow the same order.
    pub fn param_tensors_mut(&mut self) -> Vec<&mut Vec<f32>> {
        let mut out = Vec::with_capacity(2 * (self.enc.len() + self.dec.len()));
        for l in &mut self.enc {
            out.push(&mut l.w);
            out.push(&mut l.b);
        }
        for l in &mut self.dec {
            out.push(&mut l.w);
            out.push(&mut l.b);
        }
        out
    }

    pub fn param_tensors(&self) -> Vec<&Vec<f32>> {
        let mut out = Vec::with_capacity(2 * (self.enc.len() + self.dec.len()));
        for l in &self.enc {
            out.push(&l.w);
            out.push(&l.b);
        }
        for l in &self.dec {
            out.push(&l.w);
            out.push(&l.b);
        }
        out
    }

    fn enc_has_norm(&self, i: usize) -> bool {
        i >= 1 && i + 1 < self.depth
    }

    fn dec_has_norm(&self, j: usize) -> bool {
        j + 1 < self.depth
    }

    pub fn forward_cached(
        &self,
        x: &Tensor,
        z: Option<&[f64]>,
        dropout_active: bool,
        drop_rng: Option<&mut ChaCha12Rng>,
    ) -> CoreCache {
        assert_eq!(x.c, 1, "trunk expects a single input channel");
        match z {
            Some(z) => assert_eq!(z.len(), self.latent_dim),
            None => assert_eq!(self.latent_dim, 0, "latent configured but not supplied"),
        }

        let mut enc_conv_in = Vec::with_capacity(self.depth);
        let mut enc_out = Vec::with_capacity(self.depth);
        let mut enc_inv_std = Vec::with_capacity(self.depth);
        let mut cur = x.clone();
        for i in 0..self.depth {
            let conv_in = if i == 0 { cur.clone() } else { leaky_relu(&cur, LEAKY_SLOPE) };
            let conv_out = self.enc[i].forward(&conv_in);
            let (out, inv) = if self.enc_has_norm(i) {
                let (n, inv) = instance_norm(&conv_out);
                (n, inv)
            } else {
                (conv_out, Vec::new())
            };
            enc_conv_in.push(conv_in);
            enc_inv_std.push(inv);
            cur = out.clone();
            enc_out.push(out);
        }

        let firing = dropout_active && self.dropout_p > 0.0 && !self.dropout_blocks.is_empty();
        let mut drop_rng = drop_rng;
        assert!(!firing || drop_rng.is_some(), "dropout requires an rng stream");

        let mut dec_relu_in = Vec::with_capacity(self.depth);
        let mut dec_conv_in = Vec::with_capacity(self.depth);
        let mut dec_normed = Vec::with_capacity(self.depth);
        let mut dec_inv_std = Vec::with_capacity(self.depth);
        let mut dec_drop_mask: Vec<Option<Vec<f64>>> = Vec::with_capacity(self.depth);
        let mut output = None;

        let mut prev = match z {
            Some(z) => {
                let bneck = enc_out.last().unwrap();
                Tensor::concat_channels(bneck, &Tensor::tile_latent(z, bneck.h, bneck.w))
            }
            None => enc_out.last().unwrap().clone(),
        };
        for j in 0..self.depth {
            let lvl = self.depth - 1 - j;
            let relu_in = if j == 0 { prev } else { Tensor::concat_channels(&prev, &enc_out[lvl]) };
            let conv_in = relu(&relu_in);
            let conv_out = self.dec[j].forward(&conv_in);
            dec_relu_in.push(relu_in);
            dec_conv_in.push(conv_in);
            if self.dec_has_norm(j) {
                let (normed, inv) = instance_norm(&conv_out);
                let (after, mask) = if firing && self.dropout_blocks.contains(&j) {
                    let rng = drop_rng.as_deref_mut().unwrap();
                    let (d, m) = dropout(&normed, self.dropout_p, rng);
                    (d, Some(m))
                } else {
                    (normed.clone(), None)
                };
                dec_normed.push(normed);
                dec_inv_std.push(inv);
                dec_drop_mask.push(mask);
                prev = after;
            } else {
                let y = sigmoid(&conv_out);
                dec_normed.push(y.clone());
                dec_inv_std.push(Vec::new());
                dec_drop_mask.push(None);
                output = Some(y);
                prev = Tensor::zeros(0, 0, 0); // unused past the last block
            }
        }

        CoreCache {
            enc_conv_in,
            enc_out,
            enc_inv_std,
            dec_relu_in,
            dec_conv_in,
            dec_normed,
            dec_inv_std,
            dec_drop_mask,
            output: output.expect("decoder produced no output"),
        }
    }

    pub fn forward(
        &self,
        x: &Tensor,
        z: Option<&[f64]>,
        dropout_active: bool,
        drop_rng: Option<&mut ChaCha12Rng>,
    ) -> Tensor {
        self.forward_cached(x, z, dropout_active, drop_rng).output
    }

    /// Backpropagate `d_out` (gradient at the sigmoid output) through the
    /// cached forward pass, accumulating parameter gradients into `grads`.
    pub fn backward(&self, cache: &CoreCache, d_out: &Tensor, grads: &mut CoreGrads) {
        let mut d_skip: Vec<Option<Tensor>> = (0..self.depth).map(|_| None).collect();

        // decoder, output block back to the bottleneck block
        let mut d_enc_top = None;
        let mut carried: Option<Tensor> = None;
        for j in (0..self.depth).rev() {
            let lvl = self.depth - 1 - j;
            // gradient at this block's conv output
            let d_conv_out = if self.dec_has_norm(j) {
                let g = carried.take().expect("gradient carried from the shallower block");
                let masked = match &cache.dec_drop_mask[j] {
                    Some(m) => apply_mask(&g, m),
                    None => g,
                };
                instance_norm_backward(&cache.dec_normed[j], &cache.dec_inv_std[j], &masked)
            } else {
                sigmoid_backward(d_out, &cache.output)
            };
            let d_conv_in = self.dec[j]
                .backward(
                    &cache.dec_conv_in[j],
                    &d_conv_out,
                    Some((&mut grads.dec_w[j], &mut grads.dec_b[j])),
                    true,
                )
                .unwrap();
            let d_relu_in = relu_backward(&d_conv_in, &cache.dec_relu_in[j]);
            if j == 0 {
                let top_c = self.enc.last().unwrap().co;
                let d_top = if self.latent_dim > 0 {
                    d_relu_in.split_channels(top_c).0
                } else {
                    d_relu_in
                };
                d_enc_top = Some(d_top);
            } else {
                let up_c = self.dec[j - 1].co;
                let (d_prev, d_sk) = d_relu_in.split_channels(up_c);
                d_skip[lvl] = Some(d_sk);
                carried = Some(d_prev);
            }
        }

        // encoder, deepest block back to the input
        let mut g = d_enc_top.expect("decoder pass set the bottleneck gradient");
        for i in (0..self.depth).rev() {
            if let Some(sk) = &d_skip[i] {
                for (a, b) in g.data.iter_mut().zip(&sk.data) {
                    *a += b;
                }
            }
            let g_now = std::mem::replace(&mut g, Tensor::zeros(0, 0, 0));
            let d_conv_out = if self.enc_has_norm(i) {
                instance_norm_backward(&cache.enc_out[i], &cache.enc_inv_std[i], &g_now)
            } else {
                g_now
            };
            let dx = self.enc[i].backward(
                &cache.enc_conv_in[i],
                &d_conv_out,
                Some((&mut grads.enc_w[i], &mut grads.enc_b[i])),
                i > 0,
            );
            if i > 0 {
                g = leaky_relu_backward(&dx.unwrap(), &cache.enc_out[i - 1], LEAKY_SLOPE);
            }
        }
    }
}

pub struct CoreCache {
    pub enc_conv_in: Vec<Tensor>,
    /// Per-block outputs; for normalized blocks this is the normalized
    /// tensor, which is exactly what the norm backward needs.
    pub enc_out: Vec<Tensor>,
    pub enc_inv_std: Vec<Vec<f64>>,
    pub dec_relu_in: Vec<Tensor>,
    pub dec_conv_in: Vec<Tensor>,
    pub dec_normed: Vec<Tensor>,
    pub dec_inv_std: Vec<Vec<f64>>,
    pub dec_drop_mask: Vec<Option<Vec<f64>>>,
    pub output: Tensor,
}

#[derive(Debug, Clone)]
pub struct CoreGrads {
    pub enc_w: Vec<Vec<f64>>,
    pub enc_b: Vec<Vec<f64>>,
    pub dec_w: Vec<Vec<f64>>,
    pub dec_b: Vec<Vec<f64>>,
}

impl CoreGrads {
    pub fn zeros_like(core: &Core) -> Self {
        Self {
            enc_w: core.enc.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            enc_b: core.enc.iter().map(|l| vec![0.0; l.b.len()]).collect(),
            dec_w: core.dec.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            dec_b: core.dec.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }

    pub fn add(&mut self, other: &Self) {
        let pairs = [
            (&mut self.enc_w, &other.enc_w),
            (&mut self.enc_b, &other.enc_b),
            (&mut self.dec_w, &other.dec_w),
            (&mut self.dec_b, &other.dec_b),
        ];
        for (dst, src) in pairs {
            for (d, s) in dst.iter_mut().zip(src) {
                for (a, b) in d.iter_mut().zip(s) {
                    *a += b;
                }
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for group in [&mut self.enc_w, &mut self.enc_b, &mut self.dec_w, &mut self.dec_b] {
            for t in group.iter_mut() {
                for v in t.iter_mut() {
                    *v *= k;
                }
            }
        }
    }

    /// Tensors in the order matching `Core::param_tensors`.
    pub fn tensors(&self) -> Vec<&Vec<f64>> {
        let mut out = Vec::new();
        for (w, b) in self.enc_w.iter().zip(&self.enc_b) {
            out.push(w);
            out.push(b);
        }
        for (w, b) in self.dec_w.iter().zip(&self.dec_b) {
            out.push(w);
            out.push(b);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngSeed;

    fn input(size: usize, seed: u64) -> Tensor {
        let mut r = RngSeed(seed).rng();
        use rand::Rng;
        let data = (0..size * size).map(|_| if r.gen::<f64>() < 0.5 { 0.0 } else { 1.0 }).collect();
        Tensor { c: 1, h: size, w: size, data }
    }

    #[test]
    fn channel_ladder_matches_reference_widths() {
        let mut r = RngSeed(1).rng();
        let core = Core::new(8, 64, 16, 0.0, &mut r);
        let enc: Vec<(usize, usize)> = core.enc.iter().map(|l| (l.ci, l.co)).collect();
        assert_eq!(
            enc,
            vec![
                (1, 64),
                (64, 128),
                (128, 256),
                (256, 512),
                (512, 512),
                (512, 512),
                (512, 512),
                (512, 512)
            ]
        );
        let dec: Vec<(usize, usize)> = core.dec.iter().map(|l| (l.ci, l.co)).collect();
        assert_eq!(
            dec,
            vec![
                (528, 512),
                (1024, 512),
                (1024, 512),
                (1024, 512),
                (1024, 256),
                (512, 128),
                (256, 64),
                (128, 1)
            ]
        );
    }

    #[test]
    fn forward_preserves_spatial_dims() {
        for (depth, size) in [(2usize, 8usize), (3, 16), (4, 32)] {
            let mut r = RngSeed(2).rng();
            let core = Core::new(depth, 4, 4, 0.0, &mut r);
            let x = input(size, 9);
            let z = vec![0.3, -0.7, 1.1, 0.0];
            let y = core.forward(&x, Some(&z), false, None);
            assert_eq!((y.c, y.h, y.w), (1, size, size));
            assert!(y.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn latent_free_core_rejects_latent_and_runs_clean() {
        let mut r = RngSeed(3).rng();
        let core = Core::new(3, 4, 0, 0.0, &mut r);
        let y = core.forward(&input(16, 4), None, false, None);
        assert_eq!((y.h, y.w), (16, 16));
    }

    #[test]
    fn dropout_inactive_paths_agree() {
        let mut r = RngSeed(5).rng();
        let core = Core::new(4, 4, 0, 0.5, &mut r);
        let x = input(16, 6);
        let a = core.forward(&x, None, false, None);
        let mut dr = RngSeed(7).rng();
        let b = core.forward(&x, None, false, Some(&mut dr));
        assert_eq!(a.data, b.data);
        // active dropout changes the output
        let mut dr = RngSeed(7).rng();
        let c = core.forward(&x, None, true, Some(&mut dr));
        assert_ne!(a.data, c.data);
    }

    /// Sign pattern of every rectifier input in the cache. Two forwards with
    /// equal patterns lie on the same smooth piece of the network, which is
    /// what makes a central difference trustworthy.
    fn act_signs(cache: &CoreCache) -> Vec<bool> {
        let mut s = Vec::new();
        for t in &cache.enc_out {
            s.extend(t.data.iter().map(|&v| v > 0.0));
        }
        for t in &cache.dec_relu_in {
            s.extend(t.data.iter().map(|&v| v > 0.0));
        }
        s
    }

    /// Central-difference gradient check over every parameter of a small but
    /// fully featured core (latent concat, skips, norms, dropout). The
    /// dropout mask is frozen by reseeding the same stream before each
    /// forward; parameters whose perturbation interval crosses a rectifier
    /// kink are skipped, since the difference quotient is invalid there.
    #[test]
    fn gradients_match_finite_differences() {
        let mut r = RngSeed(11).rng();
        let mut core = Core::new(3, 2, 2, 0.25, &mut r);
        let x = input(16, 12);
        let z = vec![0.4, -1.2];

        // fixed projection so the scalar loss exercises every output pixel
        let mut pr = RngSeed(13).rng();
        use rand::Rng;
        let proj: Vec<f64> = (0..16 * 16).map(|_| pr.gen::<f64>() * 2.0 - 1.0).collect();
        let eval = |core: &Core| -> (f64, Vec<bool>) {
            let mut dr = RngSeed(99).rng();
            let cache = core.forward_cached(&x, Some(&z), true, Some(&mut dr));
            let l = cache.output.data.iter().zip(&proj).map(|(a, b)| a * b).sum();
            (l, act_signs(&cache))
        };

        let mut dr = RngSeed(99).rng();
        let cache = core.forward_cached(&x, Some(&z), true, Some(&mut dr));
        let d_out = Tensor { c: 1, h: 16, w: 16, data: proj.clone() };
        let mut grads = CoreGrads::zeros_like(&core);
        core.backward(&cache, &d_out, &mut grads);

        let h = 1e-4f32;
        let n_tensors = core.param_tensors().len();
        let (mut checked, mut kinked) = (0usize, 0usize);
        for t in 0..n_tensors {
            let len = core.param_tensors()[t].len();
            for idx in (0..len).step_by(3) {
                let orig = core.param_tensors()[t][idx];
                let (pp, pm) = (orig + h, orig - h);
                core.param_tensors_mut()[t][idx] = pp;
                let (lp, sp) = eval(&core);
                core.param_tensors_mut()[t][idx] = pm;
                let (lm, sm) = eval(&core);
                core.param_tensors_mut()[t][idx] = orig;
                if sp != sm {
                    kinked += 1;
                    continue;
                }
                let h_eff = (pp as f64 - pm as f64) / 2.0;
                let num = (lp - lm) / (2.0 * h_eff);
                let ana = grads.tensors()[t][idx];
                if num.abs() < 1e-8 && ana.abs() < 1e-8 {
                    continue;
                }
                let rel = (num - ana).abs() / num.abs().max(ana.abs()).max(1e-8);
                assert!(
                    rel <= 1e-3,
                    "tensor {t} idx {idx}: numeric {num:.6e} vs analytic {ana:.6e} (rel {rel:.2e})"
                );
                checked += 1;
            }
        }
        assert!(checked > 250, "gradient check covered too few parameters: {checked}");
        assert!(kinked < 2 * checked, "too many kink skips: {kinked} vs {checked} checked");
    }

    #[test]
    fn backward_accumulates_across_calls() {
        let mut r = RngSeed(21).rng();
        let core = Core::new(2, 2, 0, 0.0, &mut r);
        let x = input(8, 22);
        let cache = core.forward_cached(&x, None, false, None);
        let d = Tensor { c: 1, h: 8, w: 8, data: vec![1.0; 64] };
        let mut g1 = CoreGrads::zeros_like(&core);
        core.backward(&cache, &d, &mut g1);
        let mut g2 = CoreGrads::zeros_like(&core);
        core.backward(&cache, &d, &mut g2);
        core.backward(&cache, &d, &mut g2);
        for (a, b) in g1.tensors().iter().zip(g2.tensors().iter()) {
            for (x1, x2) in a.iter().zip(b.iter()) {
                assert!((x1 * 2.0 - x2).abs() <= 1e-12 * x2.abs().max(1.0));
            }
        }
    }
}
