//! Victim retraining and ranking metrics over real test users.

mod metrics;
mod report;
mod transfer;

pub use metrics::{group_difference, hit_ratio_at_k, ndcg_at_k, Metric};
pub use report::{EvalReport, ReportRow};
pub use transfer::{evaluate_transfer, test_users, EvalConfig, NamedProfiles, RepeatInput, VictimSpec, CLEAN};
pub(crate) use transfer::evaluate_cells;
