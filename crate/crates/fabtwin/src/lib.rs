//! Variation-aware digital twin for nanofabrication: procedural layout
//! synthesis, a stochastic process simulator, conditional generative models
//! with hand-rolled training, and distribution-level evaluation.

pub mod dataset;
pub mod fab;
pub mod manifest;
pub mod metrics;
pub mod morph;
pub mod nn;
pub mod raster;
pub mod rng;
pub mod synth;
pub mod train;
