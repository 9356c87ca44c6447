//! Optimization: losses, Adam, the alternating adversarial loop, baseline
//! trainers, and the loss-log format.

pub mod adam;
pub mod loops;
pub mod losses;

pub use adam::{adam_update, AdamHyper, AdamOpt};
pub use loops::{train_ensemble, train_genfab, train_unet, GanTrainOutput};

use crate::nn::checkpoint::CheckpointError;
use crate::nn::{DiscriminatorConfig, GeneratorConfig, NnError};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("bad config: {0}")]
    Config(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },
    #[error("model: {0}")]
    Model(#[from] NnError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("loss log: {0}")]
    LossLog(String),
}

fn default_batch_size() -> usize {
    4
}
fn default_lr() -> f64 {
    2e-4
}
fn default_beta1() -> f64 {
    0.5
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}
fn default_lambda_l1() -> f64 {
    100.0
}
fn default_lambda_gan() -> f64 {
    1.0
}
fn default_log_every() -> usize {
    10
}
fn default_disc_base_width() -> usize {
    64
}
fn default_disc_num_layers() -> usize {
    5
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    /// Optimization steps (one D step and one G step each).
    pub steps: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr_g: f64,
    #[serde(default = "default_lr")]
    pub lr_d: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_adam_eps")]
    pub adam_eps: f64,
    #[serde(default = "default_lambda_l1")]
    pub lambda_l1: f64,
    #[serde(default = "default_lambda_gan")]
    pub lambda_gan: f64,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    #[serde(default)]
    pub checkpoint_path: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Trunk shape; `generator.latent_dim` is the noise dimension d.
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default = "default_disc_base_width")]
    pub disc_base_width: usize,
    #[serde(default = "default_disc_num_layers")]
    pub disc_num_layers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1,
            batch_size: default_batch_size(),
            lr_g: default_lr(),
            lr_d: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            adam_eps: default_adam_eps(),
            lambda_l1: default_lambda_l1(),
            lambda_gan: default_lambda_gan(),
            log_every: default_log_every(),
            checkpoint_path: None,
            seed: 0,
            generator: GeneratorConfig::default(),
            disc_base_width: default_disc_base_width(),
            disc_num_layers: default_disc_num_layers(),
        }
    }
}

impl TrainConfig {
    /// The discriminator matched to this run's input size.
    pub fn discriminator_config(&self) -> DiscriminatorConfig {
        DiscriminatorConfig {
            base_width: self.disc_base_width,
            num_layers: self.disc_num_layers,
            input_size: self.generator.input_size,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.steps == 0 {
            return Err(TrainError::Config("steps must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be >= 1".into()));
        }
        if self.log_every == 0 {
            return Err(TrainError::Config("log_every must be >= 1".into()));
        }
        for (name, lr) in [("lr_g", self.lr_g), ("lr_d", self.lr_d)] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(TrainError::Config(format!("{name} must be > 0, got {lr}")));
            }
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b.is_finite() && (0.0..1.0).contains(&b)) {
                return Err(TrainError::Config(format!("{name} must be in [0,1), got {b}")));
            }
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return Err(TrainError::Config(format!("adam_eps must be > 0, got {}", self.adam_eps)));
        }
        for (name, l) in [("lambda_l1", self.lambda_l1), ("lambda_gan", self.lambda_gan)] {
            if !(l.is_finite() && l >= 0.0) {
                return Err(TrainError::Config(format!("{name} must be >= 0, got {l}")));
            }
        }
        self.generator.validate().map_err(TrainError::Model)?;
        if self.lambda_gan > 0.0 {
            self.discriminator_config().validate().map_err(TrainError::Model)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| TrainError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub loss_d: f64,
    pub loss_g_total: f64,
    pub loss_g_gan: f64,
    pub loss_g_l1: f64,
    /// Milliseconds since the start of the run.
    pub wall_ms: f64,
}

pub const LOSS_CSV_HEADER: &str = "step,loss_D,loss_G_total,loss_G_gan,loss_G_l1,wall_ms";

/// Serialize records with `{}` formatting, which round-trips f64 exactly.
pub fn write_loss_csv(path: &Path, records: &[LossRecord]) -> Result<(), TrainError> {
    let mut out = String::from(LOSS_CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.step, r.loss_d, r.loss_g_total, r.loss_g_gan, r.loss_g_l1, r.wall_ms
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_loss_csv(path: &Path) -> Result<Vec<LossRecord>, TrainError> {
    let text = std::fs::read_to_string(path)?;
    parse_loss_csv(&text)
}

pub fn parse_loss_csv(text: &str) -> Result<Vec<LossRecord>, TrainError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| TrainError::LossLog("empty file".into()))?;
    if header.trim() != LOSS_CSV_HEADER {
        return Err(TrainError::LossLog(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(TrainError::LossLog(format!(
                "line {}: {} fields, expected 6",
                ln + 2,
                fields.len()
            )));
        }
        let num = |s: &str| -> Result<f64, TrainError> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| TrainError::LossLog(format!("line {}: {e}", ln + 2)))
        };
        out.push(LossRecord {
            step: fields[0]
                .trim()
                .parse::<usize>()
                .map_err(|e| TrainError::LossLog(format!("line {}: {e}", ln + 2)))?,
            loss_d: num(fields[1])?,
            loss_g_total: num(fields[2])?,
            loss_g_gan: num(fields[3])?,
            loss_g_l1: num(fields[4])?,
            wall_ms: num(fields[5])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_training_recipe() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.batch_size, 4);
        assert_eq!(cfg.lr_g, 2e-4);
        assert_eq!(cfg.lr_d, 2e-4);
        assert_eq!(cfg.beta1, 0.5);
        assert_eq!(cfg.beta2, 0.999);
        assert_eq!(cfg.adam_eps, 1e-8);
        assert_eq!(cfg.lambda_l1, 100.0);
        assert_eq!(cfg.lambda_gan, 1.0);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn sparse_json_fills_defaults() {
        let cfg: TrainConfig = serde_json::from_str(r#"{"steps": 12, "seed": 9}"#).unwrap();
        assert_eq!(cfg.steps, 12);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.batch_size, 4);
        assert_eq!(cfg.generator.depth, 8);
        assert_eq!(cfg.discriminator_config().input_size, 256);
    }

    #[test]
    fn validation_rejects_bad_hyperparameters() {
        let base = TrainConfig { steps: 1, ..TrainConfig::default() };
        let bad = |f: &dyn Fn(&mut TrainConfig)| {
            let mut c = base.clone();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(&|c| c.steps = 0));
        assert!(bad(&|c| c.batch_size = 0));
        assert!(bad(&|c| c.lr_g = 0.0));
        assert!(bad(&|c| c.lr_d = -1.0));
        assert!(bad(&|c| c.beta1 = 1.0));
        assert!(bad(&|c| c.beta2 = -0.1));
        assert!(bad(&|c| c.lambda_l1 = -2.0));
        assert!(bad(&|c| c.adam_eps = 0.0));
        assert!(bad(&|c| c.log_every = 0));
        assert!(bad(&|c| c.generator.input_size = 100)); // not divisible by 2^depth
    }

    #[test]
    fn loss_csv_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        let records = vec![
            LossRecord {
                step: 1,
                loss_d: 2.0 * std::f64::consts::LN_2,
                loss_g_total: 1.0 / 3.0,
                loss_g_gan: 0.1234567890123456,
                loss_g_l1: 7e-300,
                wall_ms: 15.25,
            },
            LossRecord {
                step: 2,
                loss_d: 0.0,
                loss_g_total: f64::MIN_POSITIVE,
                loss_g_gan: -0.0,
                loss_g_l1: 1e308,
                wall_ms: 16.0,
            },
        ];
        write_loss_csv(&path, &records).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(LOSS_CSV_HEADER));
        let back = read_loss_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in back.iter().zip(&records) {
            assert_eq!(a.step, b.step);
            assert_eq!(a.loss_d.to_bits(), b.loss_d.to_bits());
            assert_eq!(a.loss_g_total.to_bits(), b.loss_g_total.to_bits());
            assert_eq!(a.loss_g_gan.to_bits(), b.loss_g_gan.to_bits());
            assert_eq!(a.loss_g_l1.to_bits(), b.loss_g_l1.to_bits());
            assert_eq!(a.wall_ms.to_bits(), b.wall_ms.to_bits());
        }
    }

    #[test]
    fn loss_csv_rejects_malformed_input() {
        assert!(parse_loss_csv("").is_err());
        assert!(parse_loss_csv("wrong,header\n").is_err());
        let short = format!("{LOSS_CSV_HEADER}\n1,2,3\n");
        assert!(parse_loss_csv(&short).is_err());
        let nonnum = format!("{LOSS_CSV_HEADER}\n1,2,3,x,5,6\n");
        assert!(parse_loss_csv(&nonnum).is_err());
    }
}
