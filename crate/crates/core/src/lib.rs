//! Sharpness-aware poisoning attacks against embedding-based recommenders.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`]: implicit-feedback matrices, ingestion, splits, target sampling.
//! - [`recmodel`]: WRMF, BPR and LightGCN with hand-derived gradients.
//! - [`attack`]: attack objectives, the SAM worst-case perturbation, unrolled
//!   hypergradients and the tri-level attack loop, plus heuristic baselines.
//! - [`eval`]: victim retraining and HR / NDCG / D@K transfer metrics.
//! - [`landscape`]: two-direction loss-landscape grids and sharpness summaries.
//! - [`defense`]: a PCA-variance fake-user detector.

pub mod attack;
pub mod data;
pub mod defense;
mod error;
pub mod eval;
pub mod landscape;
pub mod recmodel;
pub mod rng;

pub use error::{Error, Result};
