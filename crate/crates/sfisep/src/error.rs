use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    /// Readable container holding a codec, bit depth or channel count this
    /// tool does not handle.
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("bad magic {0:?}, expected \"SFIS\"")]
    BadMagic([u8; 4]),
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("invalid header: {0}")]
    Header(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] sfisep_core::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Stable word printed ahead of the message on the diagnostic stream.
    pub fn code(&self) -> &'static str {
        use sfisep_core::Error as C;
        match self {
            Error::Io { .. } => "io",
            Error::UnsupportedFormat(_) => "unsupported-format",
            Error::Parse(_) => "parse",
            Error::BadMagic(_) => "bad-magic",
            Error::UnsupportedVersion(_) => "unsupported-version",
            Error::Truncated { .. } => "truncated",
            Error::Header(_) => "invalid-header",
            Error::Usage(_) => "usage",
            Error::Core(e) => match e {
                C::InvalidArgument(_) => "invalid-argument",
                C::GeometryTooSmall { .. } => "geometry-too-small",
                C::Shape(_) => "shape",
                C::State => "state",
                C::UndefinedMetric(_) => "undefined-metric",
                C::Diverged { .. } => "diverged",
            },
        }
    }

    /// 2 usage, 3 data or format, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Core(sfisep_core::Error::Diverged { .. } | sfisep_core::Error::UndefinedMetric(_)) => 4,
            _ => 3,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
