use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sharpap_core::Result;

use crate::config::{hex, ExperimentConfig};

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub outputs: Vec<String>,
}

/// Index of a run's artifacts. Contains no timestamps, so identical runs
/// produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub fingerprint: String,
    pub code_version: String,
    pub seed: u64,
    pub repeat_seeds: Vec<u64>,
    /// SHA-256 over fingerprint, seeds and code version.
    pub run_hash: String,
    pub completed: Vec<StageRecord>,
    pub status: String,
    pub error: Option<String>,
    pub outputs: Vec<OutputFile>,
}

impl Manifest {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let fingerprint = cfg.fingerprint()?;
        let repeat_seeds: Vec<u64> = (0..cfg.eval.repeats).map(|r| cfg.repeat_seed(r)).collect();
        let mut h = Sha256::new();
        h.update(fingerprint.as_bytes());
        for s in std::iter::once(cfg.seed).chain(repeat_seeds.iter().copied()) {
            h.update(s.to_le_bytes());
        }
        h.update(CODE_VERSION.as_bytes());
        Ok(Self {
            fingerprint,
            code_version: CODE_VERSION.to_string(),
            seed: cfg.seed,
            repeat_seeds,
            run_hash: hex(&h.finalize()),
            completed: Vec::new(),
            status: "running".into(),
            error: None,
            outputs: Vec::new(),
        })
    }

    pub fn complete(&mut self, stage: &str, outputs: &[&str]) {
        self.completed.push(StageRecord {
            name: stage.to_string(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        });
    }

    pub fn fail(&mut self, error: &str) {
        self.error = Some(error.to_string());
    }

    /// Hashes every listed output and writes `manifest.json` into `out`.
    pub fn write(&mut self, out: &Path) -> Result<()> {
        self.status = if self.error.is_some() { "partial" } else { "complete" }.into();
        self.outputs = self
            .completed
            .iter()
            .flat_map(|s| s.outputs.iter())
            .map(|p| {
                Ok(OutputFile {
                    path: p.clone(),
                    sha256: hex(&Sha256::digest(fs::read(out.join(p))?)),
                })
            })
            .collect::<Result<_>>()?;
        fs::write(out.join("manifest.json"), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
