//! In-memory training data: layout/outcome pairs lifted from a manifest (or
//! synthesized directly) into single-channel tensors.

use crate::fab::{fab_batch, FabError, FabParams};
use crate::manifest::{resolve, DatasetManifest};
use crate::nn::tensor::Tensor;
use crate::raster::BitMask;
use crate::rng::RngSeed;
use crate::synth::{synth_fourier_pattern, AmplitudeLaw, SynthError, SynthSpec};
use rayon::prelude::*;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("synthesis: {0}")]
    Synth(#[from] SynthError),
    #[error("fabrication: {0}")]
    Fab(#[from] FabError),
    #[error("dataset invalid: {0}")]
    Invalid(String),
}

/// One layout with every fabricated outcome observed for it.
#[derive(Debug, Clone)]
pub struct TrainPair {
    pub layout: Tensor,
    pub outcomes: Vec<Tensor>,
    pub structure_id: String,
}

#[derive(Debug, Clone)]
pub struct TrainDataset {
    pub pairs: Vec<TrainPair>,
    /// Square image side shared by every tensor in the set.
    pub input_size: usize,
}

impl TrainDataset {
    /// Load every referenced PNG. All images must be square and share one side
    /// length, and every pair needs at least one outcome.
    pub fn from_manifest(man: &DatasetManifest, base_dir: &Path) -> Result<Self, DatasetError> {
        if man.pairs.is_empty() {
            return Err(DatasetError::Invalid("manifest has no pairs".into()));
        }
        let load = |rel: &str| -> Result<BitMask, DatasetError> {
            let path = resolve(base_dir, rel);
            let bytes = std::fs::read(&path)
                .map_err(|e| DatasetError::Invalid(format!("{rel}: unreadable ({e})")))?;
            BitMask::from_png_bytes(&bytes)
                .map_err(|e| DatasetError::Invalid(format!("{rel}: undecodable ({e})")))
        };
        let mut items = Vec::with_capacity(man.pairs.len());
        for pair in &man.pairs {
            let layout = load(&pair.layout_path)?;
            let outcomes = pair
                .fabricated_paths
                .iter()
                .map(|p| load(p))
                .collect::<Result<Vec<_>, _>>()?;
            items.push((layout, outcomes, pair.structure_id.clone()));
        }
        Self::from_masks(items)
    }

    pub fn from_masks(
        items: Vec<(BitMask, Vec<BitMask>, String)>,
    ) -> Result<Self, DatasetError> {
        let first = items
            .first()
            .ok_or_else(|| DatasetError::Invalid("no pairs".into()))?;
        let side = first.0.width();
        let mut pairs = Vec::with_capacity(items.len());
        for (i, (layout, outcomes, structure_id)) in items.into_iter().enumerate() {
            if layout.width() != side || layout.height() != side {
                return Err(DatasetError::Invalid(format!(
                    "pair {i}: layout {}x{} but the set is {side}x{side}",
                    layout.width(),
                    layout.height()
                )));
            }
            if outcomes.is_empty() {
                return Err(DatasetError::Invalid(format!("pair {i}: no outcomes")));
            }
            for o in &outcomes {
                if o.width() != side || o.height() != side {
                    return Err(DatasetError::Invalid(format!(
                        "pair {i}: outcome {}x{} does not match layout",
                        o.width(),
                        o.height()
                    )));
                }
            }
            pairs.push(TrainPair {
                layout: Tensor::from_mask(&layout),
                outcomes: outcomes.iter().map(Tensor::from_mask).collect(),
                structure_id,
            });
        }
        Ok(Self { pairs, input_size: side })
    }

    pub fn total_outcomes(&self) -> usize {
        self.pairs.iter().map(|p| p.outcomes.len()).sum()
    }
}

/// Synthesize `n_layouts` band-limited patterns and push each through the
/// stochastic process model `outcomes_per` times. Deterministic in `seed`.
pub fn synthetic_dataset(
    n_layouts: usize,
    outcomes_per: usize,
    synth: &SynthSpec,
    fab: &FabParams,
    seed: RngSeed,
) -> Result<TrainDataset, DatasetError> {
    let items = (0..n_layouts)
        .into_par_iter()
        .map(|i| {
            let layout = synth_fourier_pattern(synth, seed.child("layout", i as u64))?;
            let outcomes = fab_batch(&layout, outcomes_per, fab, seed.child("fab", i as u64))?;
            Ok((layout, outcomes, format!("fourier{i:03}")))
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;
    TrainDataset::from_masks(items)
}

/// Pattern parameters scaled down to a `size`-pixel canvas.
pub fn small_canvas_synth(size: usize) -> SynthSpec {
    SynthSpec {
        size,
        passband_low: 1.5,
        passband_high: (size as f64 / 5.0).max(3.0),
        amplitude_law: AmplitudeLaw::Uniform,
        fill_target: 0.5,
        min_feature_px: 3,
        cleanup_iterations: 1,
    }
}

/// Process parameters gentle enough that small canvases keep their features.
pub fn small_canvas_fab() -> FabParams {
    FabParams {
        blur_sigma_px: 1.0,
        etch_bias_mean: 0.02,
        etch_bias_sd: 0.02,
        roughness_amp: 0.05,
        roughness_corr_px: 2.0,
        jitter_sd_px: 0.3,
    }
}

/// Fixed 20-pair 32x32 set used by optimization sanity tests.
pub fn smoke_dataset() -> TrainDataset {
    synthetic_dataset(20, 1, &small_canvas_synth(32), &small_canvas_fab(), RngSeed(7))
        .expect("smoke parameters are valid by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::ManifestPair;

    #[test]
    fn smoke_set_shape_and_determinism() {
        let a = smoke_dataset();
        assert_eq!(a.pairs.len(), 20);
        assert_eq!(a.input_size, 32);
        assert_eq!(a.total_outcomes(), 20);
        for p in &a.pairs {
            assert_eq!(p.layout.data.len(), 32 * 32);
            let fg: f64 = p.layout.data.iter().sum();
            assert!(fg > 0.0 && fg < 1024.0, "layout degenerate: {fg}");
        }
        let b = smoke_dataset();
        assert_eq!(a.pairs[3].layout.data, b.pairs[3].layout.data);
        assert_eq!(a.pairs[3].outcomes[0].data, b.pairs[3].outcomes[0].data);
    }

    #[test]
    fn manifest_roundtrip_yields_identical_tensors() {
        let dir = tempfile::tempdir().unwrap();
        let set = synthetic_dataset(2, 2, &small_canvas_synth(16), &small_canvas_fab(), RngSeed(3))
            .unwrap();

        // write the masks back out as PNGs plus a manifest referencing them
        let mut man = DatasetManifest::new(8.0);
        for (i, p) in set.pairs.iter().enumerate() {
            let lp = format!("layout{i}.png");
            let mask = crate::raster::binarize(&p.layout.to_gray(), 0.5).unwrap();
            std::fs::write(dir.path().join(&lp), mask.to_png_bytes().unwrap()).unwrap();
            let mut fps = Vec::new();
            for (j, o) in p.outcomes.iter().enumerate() {
                let fp = format!("fab{i}_{j}.png");
                let m = crate::raster::binarize(&o.to_gray(), 0.5).unwrap();
                std::fs::write(dir.path().join(&fp), m.to_png_bytes().unwrap()).unwrap();
                fps.push(fp);
            }
            man.pairs.push(ManifestPair {
                layout_path: lp,
                fabricated_paths: fps,
                structure_id: p.structure_id.clone(),
                seed: 3,
            });
        }

        let loaded = TrainDataset::from_manifest(&man, dir.path()).unwrap();
        assert_eq!(loaded.pairs.len(), 2);
        assert_eq!(loaded.input_size, 16);
        for (a, b) in loaded.pairs.iter().zip(&set.pairs) {
            assert_eq!(a.layout.data, b.layout.data);
            for (x, y) in a.outcomes.iter().zip(&b.outcomes) {
                assert_eq!(x.data, y.data);
            }
        }
    }

    #[test]
    fn mixed_sizes_are_rejected() {
        let items = vec![
            (BitMask::zeros(8, 8), vec![BitMask::zeros(8, 8)], "a".into()),
            (BitMask::zeros(4, 4), vec![BitMask::zeros(4, 4)], "b".into()),
        ];
        assert!(matches!(TrainDataset::from_masks(items), Err(DatasetError::Invalid(_))));

        let items = vec![(BitMask::zeros(8, 8), vec![], "a".into())];
        assert!(matches!(TrainDataset::from_masks(items), Err(DatasetError::Invalid(_))));
    }
}
