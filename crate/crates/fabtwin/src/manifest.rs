//! Dataset manifest: JSON index of (layout, fabricated outcomes) pairs.

use crate::raster::BitMask;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("manifest invalid: {0} violation(s); first: {1}")]
    Invalid(usize, String),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestPair {
    pub layout_path: String,
    pub fabricated_paths: Vec<String>,
    pub structure_id: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub resolution_nm_per_px: f64,
    pub pairs: Vec<ManifestPair>,
}

impl DatasetManifest {
    pub fn new(resolution_nm_per_px: f64) -> Self {
        Self {
            format_version: MANIFEST_FORMAT_VERSION,
            resolution_nm_per_px,
            pairs: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ManifestError> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// One broken validation rule, tied to the pair that broke it (when any).
#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub pair_index: Option<usize>,
    pub rule: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.pair_index {
            Some(i) => write!(f, "pair {}: {}", i, self.rule),
            None => write!(f, "{}", self.rule),
        }
    }
}

/// Check a manifest against the files it references. Paths are resolved
/// relative to `base_dir`. Returns every violation rather than the first.
pub fn validate_manifest(manifest: &DatasetManifest, base_dir: &Path) -> Vec<Violation> {
    let mut out = Vec::new();
    if manifest.format_version != MANIFEST_FORMAT_VERSION {
        out.push(Violation {
            pair_index: None,
            rule: format!(
                "unknown format_version {} (expected {MANIFEST_FORMAT_VERSION})",
                manifest.format_version
            ),
        });
    }
    if !(manifest.resolution_nm_per_px.is_finite() && manifest.resolution_nm_per_px > 0.0) {
        out.push(Violation {
            pair_index: None,
            rule: format!("resolution_nm_per_px must be positive, got {}", manifest.resolution_nm_per_px),
        });
    }
    if manifest.pairs.is_empty() {
        out.push(Violation { pair_index: None, rule: "manifest has no pairs".into() });
    }
    for (i, pair) in manifest.pairs.iter().enumerate() {
        let layout = match load_mask(base_dir, &pair.layout_path) {
            Ok(m) => Some(m),
            Err(rule) => {
                out.push(Violation { pair_index: Some(i), rule });
                None
            }
        };
        if pair.fabricated_paths.is_empty() {
            out.push(Violation { pair_index: Some(i), rule: "no fabricated outcomes listed".into() });
        }
        for fp in &pair.fabricated_paths {
            match load_mask(base_dir, fp) {
                Ok(fab) => {
                    if let Some(l) = &layout {
                        if (fab.width(), fab.height()) != (l.width(), l.height()) {
                            out.push(Violation {
                                pair_index: Some(i),
                                rule: format!(
                                    "{}: {}x{} does not match layout {}x{}",
                                    fp,
                                    fab.width(),
                                    fab.height(),
                                    l.width(),
                                    l.height()
                                ),
                            });
                        }
                    }
                }
                Err(rule) => out.push(Violation { pair_index: Some(i), rule }),
            }
        }
    }
    out
}

/// `validate_manifest` folded into a hard pass/fail.
pub fn require_valid(manifest: &DatasetManifest, base_dir: &Path) -> Result<(), ManifestError> {
    let violations = validate_manifest(manifest, base_dir);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(ManifestError::Invalid(violations.len(), violations[0].to_string()))
    }
}

pub fn resolve(base_dir: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

fn load_mask(base_dir: &Path, rel: &str) -> Result<BitMask, String> {
    let path = resolve(base_dir, rel);
    let bytes = std::fs::read(&path).map_err(|e| format!("{rel}: unreadable ({e})"))?;
    BitMask::from_png_bytes(&bytes).map_err(|e| format!("{rel}: undecodable ({e})"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::BitMask;

    fn write_mask(dir: &Path, name: &str, w: usize, h: usize) {
        let m = BitMask::zeros(w, h);
        std::fs::write(dir.join(name), m.to_png_bytes().unwrap()).unwrap();
    }

    #[test]
    fn valid_manifest_passes() {
        let dir = tempfile::tempdir().unwrap();
        write_mask(dir.path(), "l.png", 8, 8);
        write_mask(dir.path(), "f.png", 8, 8);
        let mut man = DatasetManifest::new(1.0);
        man.pairs.push(ManifestPair {
            layout_path: "l.png".into(),
            fabricated_paths: vec!["f.png".into()],
            structure_id: "s".into(),
            seed: 0,
        });
        assert!(validate_manifest(&man, dir.path()).is_empty());
    }

    #[test]
    fn missing_file_and_dim_mismatch_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        write_mask(dir.path(), "l.png", 8, 8);
        write_mask(dir.path(), "f.png", 4, 8);
        let mut man = DatasetManifest::new(1.0);
        man.pairs.push(ManifestPair {
            layout_path: "l.png".into(),
            fabricated_paths: vec!["f.png".into(), "gone.png".into()],
            structure_id: "s".into(),
            seed: 0,
        });
        let v = validate_manifest(&man, dir.path());
        assert_eq!(v.len(), 2, "{v:?}");
        assert!(v.iter().any(|x| x.rule.contains("does not match")));
        assert!(v.iter().any(|x| x.rule.contains("unreadable")));
    }

    #[test]
    fn empty_manifest_fails() {
        let dir = tempfile::tempdir().unwrap();
        let man = DatasetManifest::new(1.0);
        let v = validate_manifest(&man, dir.path());
        assert!(v.iter().any(|x| x.rule.contains("no pairs")));
    }

    #[test]
    fn json_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut man = DatasetManifest::new(2.0);
        man.pairs.push(ManifestPair {
            layout_path: "a.png".into(),
            fabricated_paths: vec!["b.png".into()],
            structure_id: "cross100".into(),
            seed: 7,
        });
        let path = dir.path().join("manifest.json");
        man.save(&path).unwrap();
        assert_eq!(DatasetManifest::load(&path).unwrap(), man);
    }
}
