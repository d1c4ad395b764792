//! Embedding recommenders with hand-derived gradients.
//!
//! WRMF is the attacker's surrogate (full-batch, differentiable through its
//! trajectory). BPR and LightGCN are victims trained with seeded mini-batch SGD.

mod bpr;
mod config;
mod lightgcn;
mod params;
mod scoring;
mod wrmf;

use serde::{Deserialize, Serialize};

use crate::data::InteractionMatrix;
use crate::Result;

pub use bpr::{bpr_triple_loss, train_bpr};
pub use config::TrainConfig;
pub use lightgcn::{lightgcn_propagate, train_lightgcn, Propagation};
pub use params::EmbeddingParams;
pub use scoring::{predict_scores, topk_from_scores, topk_recommend};
pub use wrmf::{relaxed_weight, train_wrmf, train_wrmf_from, wrmf_loss, Entry, TrainingTrajectory, WeightedMatrix};
pub(crate) use wrmf::{wrmf_hvp, wrmf_value_cross};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Wrmf,
    Bpr,
    Lightgcn,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Wrmf => "wrmf",
            ModelKind::Bpr => "bpr",
            ModelKind::Lightgcn => "lightgcn",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Trains `kind` from a fresh seeded initialisation and returns the embeddings
/// that score items (propagated ones for LightGCN).
pub fn train_model(kind: ModelKind, r: &InteractionMatrix, cfg: &TrainConfig) -> Result<EmbeddingParams> {
    match kind {
        ModelKind::Wrmf => {
            let w = WeightedMatrix::from_binary(r, cfg.observed_weight, cfg.missing_weight);
            Ok(train_wrmf(&w, cfg, false)?.0)
        }
        ModelKind::Bpr => train_bpr(r, cfg),
        ModelKind::Lightgcn => {
            let raw = train_lightgcn(r, cfg)?;
            Ok(lightgcn_propagate(&raw, r, cfg.layers))
        }
    }
}
