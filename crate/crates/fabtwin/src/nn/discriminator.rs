//! Patch discriminator: a stack of 4x4 convolutions over the channel
//! concatenation of layout and image, ending in a 1x1 projection to a logit
//! map. Each logit judges one receptive-field patch, so the verdict is local
//! rather than global.

use super::layers::{leaky_relu, leaky_relu_backward, Conv2d};
use super::tensor::Tensor;
use super::NnError;
use crate::raster::{BitMask, GrayImage};
use crate::rng::RngSeed;
use serde::{Deserialize, Serialize};

const SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct DiscriminatorConfig {
    /// First-layer channels; widths follow min(2^i, 8) * base_width.
    pub base_width: usize,
    /// 4x4 conv layers before the 1x1 head; strides are 2,2,2 then 1s.
    pub num_layers: usize,
    /// Square input side the model is intended for (it stays fully
    /// convolutional, so other non-degenerate sizes also work).
    pub input_size: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self { base_width: 64, num_layers: 5, input_size: 256 }
    }
}

impl DiscriminatorConfig {
    pub fn widths(&self) -> Vec<usize> {
        (0..self.num_layers).map(|i| (1usize << i.min(3)).min(8) * self.base_width).collect()
    }

    pub fn strides(&self) -> Vec<usize> {
        (0..self.num_layers).map(|i| if i < 3 { 2 } else { 1 }).collect()
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.base_width == 0 || self.num_layers == 0 {
            return Err(NnError::InvalidConfig(
                "base_width and num_layers must be positive".into(),
            ));
        }
        if logit_side(self.input_size, &self.strides()).is_none() {
            return Err(NnError::InvalidConfig(format!(
                "input size {} collapses before the logit map",
                self.input_size
            )));
        }
        Ok(())
    }
}

fn logit_side(input: usize, strides: &[usize]) -> Option<usize> {
    let mut s = input as i64;
    for &st in strides {
        s = (s + 2 - 4).div_euclid(st as i64) + 1;
        if s < 1 {
            return None;
        }
    }
    Some(s as usize)
}

#[derive(Debug, Clone)]
pub struct Discriminator {
    pub cfg: DiscriminatorConfig,
    /// The 4x4 stack followed by the 1x1 head as the final element.
    pub convs: Vec<Conv2d>,
}

pub fn build_discriminator(
    cfg: DiscriminatorConfig,
    seed: RngSeed,
) -> Result<Discriminator, NnError> {
    cfg.validate()?;
    let mut rng = seed.rng();
    let widths = cfg.widths();
    let strides = cfg.strides();
    let mut convs = Vec::with_capacity(cfg.num_layers + 1);
    let mut ci = 2;
    for (w, s) in widths.iter().zip(&strides) {
        convs.push(Conv2d::new(ci, *w, 4, *s, 1, &mut rng));
        ci = *w;
    }
    convs.push(Conv2d::new(ci, 1, 1, 1, 0, &mut rng));
    Ok(Discriminator { cfg, convs })
}

pub struct DiscCache {
    /// Input to conv i (the raw pair tensor for i = 0).
    pub conv_in: Vec<Tensor>,
    /// Pre-activation output of conv i; the last entry is the logit map.
    pub conv_out: Vec<Tensor>,
}

impl DiscCache {
    pub fn logits(&self) -> &Tensor {
        self.conv_out.last().unwrap()
    }
}

#[derive(Debug, Clone)]
pub struct DiscGrads {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

impl DiscGrads {
    pub fn zeros_like(d: &Discriminator) -> Self {
        Self {
            w: d.convs.iter().map(|c| vec![0.0; c.w.len()]).collect(),
            b: d.convs.iter().map(|c| vec![0.0; c.b.len()]).collect(),
        }
    }

    pub fn scale(&mut self, k: f64) {
        for group in [&mut self.w, &mut self.b] {
            for t in group.iter_mut() {
                for v in t.iter_mut() {
                    *v *= k;
                }
            }
        }
    }

    pub fn add(&mut self, other: &Self) {
        for (group, og) in [(&mut self.w, &other.w), (&mut self.b, &other.b)] {
            for (t, ot) in group.iter_mut().zip(og) {
                for (v, ov) in t.iter_mut().zip(ot) {
                    *v += ov;
                }
            }
        }
    }

    /// Tensors in the order matching `Discriminator::param_tensors`.
    pub fn tensors(&self) -> Vec<&Vec<f64>> {
        let mut out = Vec::new();
        for (w, b) in self.w.iter().zip(&self.b) {
            out.push(w);
            out.push(b);
        }
        out
    }
}

impl Discriminator {
    /// Side length of the logit map for a given square input.
    pub fn logit_side(&self, input: usize) -> Option<usize> {
        logit_side(input, &self.cfg.strides())
    }

    /// Receptive field of one logit in input pixels.
    pub fn receptive_field(&self) -> usize {
        let mut r = 1usize;
        let mut j = 1usize;
        for s in self.cfg.strides() {
            r += 3 * j;
            j *= s;
        }
        r // the 1x1 head adds nothing
    }

    pub fn pair_tensor(layout: &BitMask, image: &GrayImage) -> Result<Tensor, NnError> {
        if layout.width() != image.width() || layout.height() != image.height() {
            return Err(NnError::InvalidInput(format!(
                "layout {}x{} vs image {}x{}",
                layout.width(), layout.height(), image.width(), image.height()
            )));
        }
        Ok(Tensor::concat_channels(&Tensor::from_mask(layout), &Tensor::from_gray(image)))
    }

    pub fn forward(&self, layout: &BitMask, image: &GrayImage) -> Result<Tensor, NnError> {
        let x = Self::pair_tensor(layout, image)?;
        if self.logit_side(x.h).is_none() || self.logit_side(x.w).is_none() {
            return Err(NnError::InvalidInput(format!(
                "input {}x{} collapses before the logit map",
                x.w, x.h
            )));
        }
        let mut cache = self.forward_cached(&x);
        Ok(cache.conv_out.pop().expect("non-empty conv stack"))
    }

    pub fn forward_cached(&self, x: &Tensor) -> DiscCache {
        let mut conv_in = Vec::with_capacity(self.convs.len());
        let mut conv_out = Vec::with_capacity(self.convs.len());
        let mut cur = x.clone();
        for (i, conv) in self.convs.iter().enumerate() {
            let inp = if i == 0 { cur.clone() } else { leaky_relu(&cur, SLOPE) };
            let out = conv.forward(&inp);
            conv_in.push(inp);
            cur = out.clone();
            conv_out.push(out);
        }
        DiscCache { conv_in, conv_out }
    }

    /// Backward from a gradient on the logit map. Parameter gradients land in
    /// `grads` when given; the input-pair gradient is returned when asked.
    pub fn backward(
        &self,
        cache: &DiscCache,
        d_logits: &Tensor,
        mut grads: Option<&mut DiscGrads>,
        want_dx: bool,
    ) -> Option<Tensor> {
        let n = self.convs.len();
        let mut g = d_logits.clone();
        for i in (0..n).rev() {
            let layer_grads = grads
                .as_deref_mut()
                .map(|gr| {
                    let (w, b) = (&mut gr.w[i], &mut gr.b[i]);
                    (w.as_mut_slice(), b.as_mut_slice())
                });
            let need_dx = i > 0 || want_dx;
            let dx = self.convs[i].backward(&cache.conv_in[i], &g, layer_grads, need_dx);
            if i > 0 {
                g = leaky_relu_backward(&dx.unwrap(), &cache.conv_out[i - 1], SLOPE);
            } else {
                return dx;
            }
        }
        None
    }

    pub fn param_count(&self) -> usize {
        self.convs.iter().map(|c| c.w.len() + c.b.len()).sum()
    }

    pub fn param_tensors_mut(&mut self) -> Vec<&mut Vec<f32>> {
        let mut out = Vec::with_capacity(2 * self.convs.len());
        for c in &mut self.convs {
            out.push(&mut c.w);
            out.push(&mut c.b);
        }
        out
    }

    pub fn param_tensors(&self) -> Vec<&Vec<f32>> {
        let mut out = Vec::with_capacity(2 * self.convs.len());
        for c in &self.convs {
            out.push(&c.w);
            out.push(&c.b);
        }
        out
    }

    pub fn checksum(&self) -> f64 {
        self.param_tensors().iter().flat_map(|t| t.iter()).map(|&v| v as f64).sum()
    }
}
