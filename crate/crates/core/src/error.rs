use std::path::PathBuf;

use crate::sampler::PartialPaint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The denoiser produced something unusable at timestep `t`.
    #[error("sampling failed at t={t}: {reason}")]
    SamplingFailure { t: usize, reason: String },

    /// Cooperative cancellation. Carries whatever the trajectory had produced so far.
    #[error("paint cancelled after {} of {} ops", .0.completed_ops, .0.total_ops)]
    Cancelled(Box<PartialPaint>),

    #[error("training failed: {0}")]
    TrainingFailure(String),

    #[error("{path}: {reason}")]
    Io { path: PathBuf, reason: String },

    #[error("malformed document: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Io { path: path.into(), reason: reason.to_string() }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
