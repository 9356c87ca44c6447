//! Adam with bias correction. Parameters live in f32 (the checkpoint format),
//! so each update round-trips through f64 arithmetic and writes back f32;
//! moment estimates stay in f64 to avoid compounding rounding across steps.

use super::TrainError;

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// One bias-corrected update of a single coordinate. `t` is the 1-based step
/// count *including* this update.
pub fn adam_update(
    p: f64,
    g: f64,
    m: f64,
    v: f64,
    t: u64,
    hp: &AdamHyper,
) -> (f64, f64, f64) {
    let m1 = hp.beta1 * m + (1.0 - hp.beta1) * g;
    let v1 = hp.beta2 * v + (1.0 - hp.beta2) * g * g;
    let m_hat = m1 / (1.0 - hp.beta1.powi(t as i32));
    let v_hat = v1 / (1.0 - hp.beta2.powi(t as i32));
    (p - hp.lr * m_hat / (v_hat.sqrt() + hp.eps), m1, v1)
}

/// Optimizer state for one model: first/second moments shaped like the model's
/// parameter tensors, plus the shared step counter.
#[derive(Debug, Clone)]
pub struct AdamOpt {
    pub hp: AdamHyper,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamOpt {
    pub fn new(hp: AdamHyper, param_lens: &[usize]) -> Self {
        Self {
            hp,
            m: param_lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: param_lens.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Apply one step to every parameter tensor. `params` and `grads` must
    /// match the layout given at construction.
    pub fn step(
        &mut self,
        params: Vec<&mut Vec<f32>>,
        grads: Vec<&Vec<f64>>,
    ) -> Result<(), TrainError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(TrainError::Shape(format!(
                "optimizer built for {} tensors, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (k, g) in grads.iter().enumerate() {
            if g.len() != self.m[k].len() {
                return Err(TrainError::Shape(format!(
                    "grad tensor {k}: {} values, expected {}",
                    g.len(),
                    self.m[k].len()
                )));
            }
            if !g.iter().all(|x| x.is_finite()) {
                return Err(TrainError::NonFinite(format!("gradient tensor {k}")));
            }
        }
        self.t += 1;
        for ((p, g), (m, v)) in
            params.into_iter().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..g.len() {
                let (p1, m1, v1) = adam_update(p[i] as f64, g[i], m[i], v[i], self.t, &self.hp);
                p[i] = p1 as f32;
                m[i] = m1;
                v[i] = v1;
            }
        }
        Ok(())
    }
}
