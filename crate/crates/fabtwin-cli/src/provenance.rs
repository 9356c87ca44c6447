//! Run records: every command leaves a `run.json` next to its outputs with
//! the resolved configuration, the seeds in play, and digests of the
//! artifacts it wrote, so any result can be traced back to its inputs.

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Serialize)]
pub struct RunRecord {
    pub tool_version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub seeds: BTreeMap<String, u64>,
    pub config: serde_json::Value,
    /// Artifact name -> sha256 of its bytes. Loss CSVs are digested with the
    /// wall-clock column stripped so reruns of the same work match.
    pub artifacts: BTreeMap<String, String>,
    pub status: String,
}

impl RunRecord {
    pub fn new(command: &str) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            argv: std::env::args().collect(),
            seeds: BTreeMap::new(),
            config: serde_json::Value::Null,
            artifacts: BTreeMap::new(),
            status: "ok".to_string(),
        }
    }

    pub fn seed(&mut self, label: &str, value: u64) -> &mut Self {
        self.seeds.insert(label.to_string(), value);
        self
    }

    pub fn config<T: Serialize>(&mut self, cfg: &T) -> &mut Self {
        self.config = serde_json::to_value(cfg).unwrap_or(serde_json::Value::Null);
        self
    }

    /// Digest `path` and file it under its file name.
    pub fn artifact(&mut self, path: &Path) -> Result<&mut Self> {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("artifact")
            .to_string();
        self.artifacts.insert(name, digest_file(path)?);
        Ok(self)
    }

    /// Digest a loss CSV with wall-clock times stripped.
    pub fn loss_artifact(&mut self, path: &Path) -> Result<&mut Self> {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("loss.csv")
            .to_string();
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        self.artifacts.insert(name, digest_str(&strip_wall_ms(&text)));
        Ok(self)
    }

    /// Write `run.json` into `dir`. Called on success and on any failure
    /// that happens after validation, so partial runs stay traceable.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("run.json");
        let text = serde_json::to_string_pretty(self).context("serializing run record")?;
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    format!("sha256:{:x}", Sha256::digest(bytes))
}

pub fn digest_str(s: &str) -> String {
    digest_bytes(s.as_bytes())
}

pub fn digest_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(digest_bytes(&bytes))
}

/// Stable digest of a directory of files: sha256 over the sorted list of
/// (file name, content digest) lines.
pub fn digest_dir_listing(paths: &[std::path::PathBuf]) -> Result<String> {
    let mut lines = Vec::with_capacity(paths.len());
    for p in paths {
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("?");
        lines.push(format!("{name} {}", digest_file(p)?));
    }
    lines.sort();
    Ok(digest_str(&lines.join("\n")))
}

/// Drop the final (wall-clock) column from every CSV line.
fn strip_wall_ms(text: &str) -> String {
    text.lines()
        .map(|l| match l.rfind(',') {
            Some(i) => &l[..i],
            None => l,
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use fabtwin::train::{write_loss_csv, LossRecord};
    use tempfile::tempdir;

    #[test]
    fn file_and_byte_digests_agree() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("a.bin");
        std::fs::write(&p, b"abc").unwrap();
        assert_eq!(digest_file(&p).unwrap(), digest_bytes(b"abc"));
        // Known sha256 of "abc".
        assert_eq!(
            digest_bytes(b"abc"),
            "sha256:ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn loss_digest_ignores_wall_clock() {
        let dir = tempdir().unwrap();
        let mk = |ms: f64| LossRecord {
            step: 10,
            loss_d: 1.25,
            loss_g_total: 80.0,
            loss_g_gan: 0.5,
            loss_g_l1: 0.795,
            wall_ms: ms,
        };
        let (pa, pb) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        write_loss_csv(&pa, &[mk(3.0)]).unwrap();
        write_loss_csv(&pb, &[mk(99999.5)]).unwrap();
        assert_ne!(digest_file(&pa).unwrap(), digest_file(&pb).unwrap());
        let mut ra = RunRecord::new("t");
        ra.loss_artifact(&pa).unwrap();
        let mut rb = RunRecord::new("t");
        rb.loss_artifact(&pb).unwrap();
        assert_eq!(ra.artifacts["a.csv"], rb.artifacts["b.csv"]);
    }

    #[test]
    fn directory_digest_is_order_independent() {
        let dir = tempdir().unwrap();
        let a = dir.path().join("a.png");
        let b = dir.path().join("b.png");
        std::fs::write(&a, b"one").unwrap();
        std::fs::write(&b, b"two").unwrap();
        let fwd = digest_dir_listing(&[a.clone(), b.clone()]).unwrap();
        let rev = digest_dir_listing(&[b, a]).unwrap();
        assert_eq!(fwd, rev);
    }

    #[test]
    fn run_record_lands_as_json() {
        let dir = tempdir().unwrap();
        let art = dir.path().join("x.txt");
        std::fs::write(&art, b"payload").unwrap();
        let mut r = RunRecord::new("generate");
        r.seed("seed", 7).config(&serde_json::json!({"samples": 3}));
        r.artifact(&art).unwrap();
        r.write(dir.path()).unwrap();
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("run.json")).unwrap())
                .unwrap();
        assert_eq!(v["command"], "generate");
        assert_eq!(v["seeds"]["seed"], 7);
        assert_eq!(v["status"], "ok");
        assert!(v["artifacts"]["x.txt"].as_str().unwrap().starts_with("sha256:"));
    }
}
