use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("non-finite value at {0}")]
    NonFinite(String),

    #[error("degenerate embedding: pre-normalization norm {0:e} below 1e-12")]
    DegenerateEmbedding(f64),

    #[error("k = {k} must be smaller than the number of points {n}")]
    KTooLarge { k: usize, n: usize },

    #[error("eps must be non-negative, got {0}")]
    NegativeEps(f64),

    #[error("no clusters found")]
    NoClusters,

    #[error("label {label} out of range for {k} prototypes")]
    LabelOutOfRange { label: usize, k: usize },

    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("need {needed} distinct labels, only {available} available")]
    TooFewLabels { needed: usize, available: usize },

    #[error("cannot split {pool} samples into {n} subsets")]
    SplitTooLarge { n: usize, pool: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("query identity {0} absent from gallery")]
    QueryIdentityAbsent(u32),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}
