//! Fake-profile generation: the sharpness-aware tri-level attack, its bi-level
//! backbone, and heuristic baselines.

mod baselines;
mod bound;
mod hypergrad;
mod objective;
mod profiles;
mod sam;
mod sharpap;

pub use baselines::{baseline_popular, baseline_random};
pub use bound::{estimate_smoothness, verify_transfer_bound, BoundReport};
pub use hypergrad::{backprop_training, hypergradient};
pub use objective::{
    attack_loss_full, attack_loss_group, attack_loss_group_frozen, AttackObjective, EmbeddingObjective, FlatObjective,
    FrozenObjective, GroupMask, HalfSquaredNorm, ObjectiveKind,
};
pub use profiles::{project_row, project_topn, FakeProfiles, ProfileSidecar};
pub use sam::{sam_perturbation, SamPerturbation};
pub use sharpap::{
    backbone_attack, gradient_attack, initial_profiles, sharpap_attack, AttackConfig, AttackOutcome, AttackVariant,
};
