use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("invalid horizon: {0}")]
    InvalidHorizon(String),

    #[error("sequence too short: need {needed} frames, have {have}")]
    SequenceTooShort { needed: usize, have: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },

    #[error("malformed header in {path}: {msg}")]
    MalformedHeader { path: PathBuf, msg: String },

    #[error("row length mismatch in {path} at line {line}: expected {expected} values, found {found}")]
    RowLength {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("non-finite or unparsable value in {path} at line {line}: {token:?}")]
    BadValue {
        path: PathBuf,
        line: usize,
        token: String,
    },

    #[error("unsupported units {0:?}: only meters (\"m\") are accepted")]
    Units(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("skeleton mismatch: {0}")]
    SkeletonMismatch(String),

    #[error("unsupported skeleton for synthetic generation: {0}")]
    UnsupportedSkeleton(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
