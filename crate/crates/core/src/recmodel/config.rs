use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Hyperparameters shared by the three recommenders. `steps` counts full-batch
/// gradient steps for WRMF and epochs for the pairwise models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dim: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub l2_reg: f64,
    pub observed_weight: f64,
    pub missing_weight: f64,
    pub negative_samples: usize,
    pub batch_size: usize,
    pub layers: usize,
    pub init_std: f64,
    pub seed: u64,
    /// Trajectory snapshot spacing; 1 keeps every iterate.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            learning_rate: 0.01,
            steps: 100,
            l2_reg: 0.01,
            observed_weight: 1.0,
            missing_weight: 0.05,
            negative_samples: 1,
            batch_size: 1024,
            layers: 2,
            init_std: 0.01,
            seed: 0,
            checkpoint_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be > 0, got {x}")))
            }
        };
        let non_negative = |field: &str, x: f64| {
            if x.is_finite() && x >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be >= 0, got {x}")))
            }
        };
        positive("learning_rate", self.learning_rate)?;
        non_negative("l2_reg", self.l2_reg)?;
        non_negative("observed_weight", self.observed_weight)?;
        non_negative("missing_weight", self.missing_weight)?;
        non_negative("init_std", self.init_std)?;
        if self.dim == 0 {
            return Err(Error::config("dim", "must be >= 1"));
        }
        if self.steps == 0 {
            return Err(Error::config("steps", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        if self.negative_samples == 0 {
            return Err(Error::config("negative_samples", "must be >= 1"));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::config("checkpoint_every", "must be >= 1"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn bad_fields_are_named() {
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        match cfg.validate() {
            Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "learning_rate"),
            other => panic!("{other:?}"),
        }
        let cfg = TrainConfig {
            missing_weight: -1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
