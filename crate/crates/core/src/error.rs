use thiserror::Error;

/// Errors produced by the mechanism, the simulator and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index} out of range (history has {len} entries, valid 1..={len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("grade {grade} outside [0, {max_grade}]")]
    GradeOutOfRange { grade: f64, max_grade: f64 },

    #[error("reviewer {0} already rated this paper")]
    DuplicateReviewer(u32),

    #[error("round {round} does not follow previous round {previous}")]
    NonIncreasingRound { round: u64, previous: u64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("initial global loss is zero; relative loss is undefined")]
    DegenerateLoss,

    #[error("malformed report input {path}: {reason}")]
    Report { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParam {
        name,
        reason: reason.into(),
    }
}
