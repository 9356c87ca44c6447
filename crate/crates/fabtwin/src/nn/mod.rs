//! Hand-rolled neural networks: tensors, conv/deconv layers with exact
//! backward passes, the shared encoder/decoder trunk, the conditional
//! generator, baseline U-Nets, the patch discriminator, and checkpointing.

pub mod checkpoint;
pub mod core;
pub mod discriminator;
pub mod generator;
pub mod layers;
pub mod tensor;
pub mod unet;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub use checkpoint::{
    load_discriminator, load_generator, load_model, load_unet, save_discriminator, save_generator,
    save_unet, CheckpointError, LoadedModel,
};
pub use discriminator::{build_discriminator, Discriminator, DiscriminatorConfig};
pub use generator::{build_generator, sample_latent, Generator, GeneratorConfig};
pub use unet::{build_unet, ensemble_samples, UNet};
