use alloc::string::String;

/// Failures reported by the separation toolkit.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// The resolved frame length is too short for a usable transform.
    #[error("frame length {frame_len} is below the 4-sample minimum")]
    GeometryTooSmall { frame_len: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// `backward` was requested without a recorded forward pass.
    #[error("no forward pass recorded before backward")]
    State,
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("training diverged at epoch {epoch}, item {item}: non-finite loss")]
    Diverged { epoch: usize, item: usize },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
