use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid world spec: {0}")]
    InvalidSpec(String),

    #[error("free-pose sampling exhausted after {attempts} attempts (clearance {clearance} m)")]
    SamplingExhausted { attempts: usize, clearance: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("non-finite loss at iteration {iteration}: {detail}")]
    NonFiniteLoss { iteration: usize, detail: String },

    #[error("no path between start and goal")]
    NoPath,

    #[error("checksum mismatch: manifest says {expected:#010x}, blob hashes to {actual:#010x}")]
    ChecksumMismatch { expected: u32, actual: u32 },

    #[error("unsupported policy format version {found} (this build reads up to {supported})")]
    VersionUnsupported { found: u32, supported: u32 },

    #[error("inconsistent policy: {0}")]
    ShapeInconsistent(String),

    #[error("scan has {got} ranges, policy expects {expected}")]
    ScanLengthMismatch { expected: usize, got: usize },

    #[error("malformed message: {0}")]
    MalformedMessage(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("inconsistent config: {0}")]
    ConfigInconsistent(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
