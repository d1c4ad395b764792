//! The experiment file: one JSON document describing a whole run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sharpap_core::attack::{AttackConfig, ObjectiveKind};
use sharpap_core::data::synthetic::SyntheticConfig;
use sharpap_core::data::{InputFormat, PopularityBand};
use sharpap_core::defense::PcaConfig;
use sharpap_core::eval::{EvalConfig, Metric, VictimSpec};
use sharpap_core::landscape::LandscapeConfig;
use sharpap_core::recmodel::{ModelKind, TrainConfig};
use sharpap_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum DatasetSpec {
    File {
        path: PathBuf,
        #[serde(default = "default_format")]
        format: InputFormat,
        /// Optional JSON `{user_id: 0 | 1 | null}` for group attacks.
        #[serde(default)]
        groups: Option<PathBuf>,
        #[serde(default)]
        binarize_threshold: Option<f64>,
        #[serde(default)]
        kcore: usize,
    },
    Synthetic {
        #[serde(default)]
        config: SyntheticConfig,
        #[serde(default = "default_threshold")]
        binarize_threshold: f64,
        #[serde(default)]
        kcore: usize,
    },
}

fn default_format() -> InputFormat {
    InputFormat::RatingCsv
}

fn default_threshold() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            ratios: [0.8, 0.0, 0.2],
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TargetSpec {
    pub count: usize,
    pub band: PopularityBand,
}

impl Default for TargetSpec {
    fn default() -> Self {
        Self {
            count: 5,
            band: PopularityBand::Uniform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackerKind {
    Clean,
    Random,
    Popular,
    Backbone,
    Sharpap,
}

impl AttackerKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackerKind::Clean => "clean",
            AttackerKind::Random => "random",
            AttackerKind::Popular => "popular",
            AttackerKind::Backbone => "backbone",
            AttackerKind::Sharpap => "sharpap",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimingSpec {
    /// Each variant's time is the minimum over this many runs.
    pub trials: usize,
}

impl Default for TimingSpec {
    fn default() -> Self {
        Self { trials: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub targets: TargetSpec,
    #[serde(default)]
    pub attack: AttackConfig,
    #[serde(default = "default_attackers")]
    pub attackers: Vec<AttackerKind>,
    #[serde(default = "default_victims")]
    pub victims: Vec<VictimSpec>,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub landscape: Option<LandscapeConfig>,
    #[serde(default)]
    pub defense: Option<PcaConfig>,
    #[serde(default)]
    pub timing: TimingSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_attackers() -> Vec<AttackerKind> {
    vec![AttackerKind::Clean, AttackerKind::Random, AttackerKind::Backbone, AttackerKind::Sharpap]
}

fn default_victims() -> Vec<VictimSpec> {
    [ModelKind::Wrmf, ModelKind::Bpr, ModelKind::Lightgcn]
        .into_iter()
        .map(|model| VictimSpec {
            model,
            train: TrainConfig::default(),
        })
        .collect()
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::config("config", format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks every field that can be checked without loading data.
    pub fn validate(&self) -> Result<()> {
        self.attack.validate()?;
        self.eval.validate()?;
        if self.victims.is_empty() {
            return Err(Error::config("victims", "at least one victim is required"));
        }
        for v in &self.victims {
            v.train.validate()?;
        }
        if self.attackers.is_empty() {
            return Err(Error::config("attackers", "at least one attacker is required"));
        }
        if self.targets.count == 0 {
            return Err(Error::config("targets.count", "must be >= 1"));
        }
        if let Some(n) = self.attack.profile_size {
            if n < self.targets.count {
                return Err(Error::config(
                    "attack.profile_size",
                    format!("{n} cannot hold {} target items", self.targets.count),
                ));
            }
        }
        if self.eval.metrics.contains(&Metric::D) && self.attack.objective != ObjectiveKind::Group {
            log::warn!("D@K requested for a full-user attack; it is reported but not optimised");
        }
        if let Some(l) = &self.landscape {
            l.validate()?;
        }
        if let Some(d) = &self.defense {
            if d.components == 0 {
                return Err(Error::config("defense.components", "must be >= 1"));
            }
            let f = d.resolve_fraction(self.attack.delta);
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::config("defense.remove_fraction", format!("must be in (0, 1), got {f}")));
            }
        }
        if self.timing.trials == 0 {
            return Err(Error::config("timing.trials", "must be >= 1"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form (object keys sorted). The output
    /// directory is excluded so relocating a run keeps its identity.
    pub fn fingerprint(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if let Some(obj) = value.as_object_mut() {
            obj.remove("output_dir");
        }
        // serde_json's map is ordered by key, so this is canonical.
        let canonical = serde_json::to_string(&value)?;
        Ok(hex(&Sha256::digest(canonical.as_bytes())))
    }

    /// Per-repeat seed derived from the top-level seed.
    pub fn repeat_seed(&self, repeat: usize) -> u64 {
        sharpap_core::rng::derive_seed(self.seed, 10_000 + repeat as u64)
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> ExperimentConfig {
        serde_json::from_str(r#"{"dataset": {"source": "synthetic"}}"#).unwrap()
    }

    #[test]
    fn round_trips_losslessly() {
        let cfg = minimal();
        let back: ExperimentConfig = serde_json::from_str(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn fingerprint_ignores_field_order_and_output_dir() {
        let a: ExperimentConfig = serde_json::from_str(r#"{"seed": 3, "dataset": {"source": "synthetic", "kcore": 2}}"#).unwrap();
        let b: ExperimentConfig =
            serde_json::from_str(r#"{"dataset": {"kcore": 2, "source": "synthetic"}, "output_dir": "elsewhere", "seed": 3}"#).unwrap();
        assert_eq!(a.fingerprint().unwrap(), b.fingerprint().unwrap());
        let c = ExperimentConfig { seed: 4, ..a.clone() };
        assert_ne!(a.fingerprint().unwrap(), c.fingerprint().unwrap());
    }

    #[test]
    fn negative_epsilon_names_the_field() {
        let mut cfg = minimal();
        cfg.attack.epsilon = -0.1;
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("epsilon"), "{msg}");
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"dataset": {"source": "synthetic"}, "bogus": 1}"#).is_err());
    }
}
