use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("degenerate torus: {0}")]
    DegenerateTorus(String),
    #[error("edge coloring failed: {0}")]
    ColoringFailure(String),
    #[error("no perfect matching: {0}")]
    NoPerfectMatching(String),
    #[error("unsupported embedding: {0}")]
    UnsupportedEmbedding(String),
    #[error("inconsistent inputs: {0}")]
    Consistency(String),
    #[error("invalid gate: {0}")]
    InvalidGate(String),
    #[error("invalid covering: {0}")]
    InvalidCovering(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("reference set is not orthonormal (max deviation {0:.3e})")]
    NonOrthonormal(f64),
    #[error("missing reference states for infidelity cost")]
    MissingReference,
    #[error("Lanczos did not converge after {iterations} restarts; residuals {residuals:?}")]
    Convergence { iterations: usize, residuals: Vec<f64> },
    #[error("too many sites for a dense matrix: {0}")]
    TooLarge(usize),
    #[error("non-finite cost or gradient at evaluation {call}: value {value}")]
    NonFinite { call: usize, value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown native gate set `{0}`")]
    UnknownNativeSet(String),
    #[error("nothing to summarize: {0}")]
    Empty(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config error: {0}")]
    Config(#[from] toml::de::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
