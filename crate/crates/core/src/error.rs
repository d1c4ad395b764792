use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("training diverged at step {step}")]
    Divergence { step: usize },

    #[error("invalid value for `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("target item set is empty")]
    EmptyTargets,

    #[error("user group {0} is empty")]
    EmptyGroup(usize),

    #[error("user set is empty")]
    EmptyUsers,

    #[error("requested {requested} items from a band holding {available}")]
    BandTooSmall { requested: usize, available: usize },

    #[error("profile size {n} cannot hold {targets} target items")]
    ProfileTooSmall { n: usize, targets: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("bad embedding file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
