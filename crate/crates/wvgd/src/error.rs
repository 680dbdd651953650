use thiserror::Error;

/// Errors surfaced by the inference engine and the experiment harness.
#[derive(Debug, Error)]
pub enum WvgdError {
    #[error("ensemble must contain at least one particle")]
    EmptyEnsemble,

    #[error("particles {0} and {1} coincide (distance <= 1e-12); tessellation would be degenerate")]
    CoincidentParticles(usize, usize),

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    #[error("weights must be nonnegative and sum to 1 (got sum {sum})")]
    InvalidWeights { sum: f64 },

    #[error("all importance weights are zero in cell {cell}; proposal does not cover the cell")]
    StarvedCell { cell: usize },

    #[error("component for cell {cell} starved: {accepted} acceptances in {proposed} proposals")]
    ComponentStarved {
        cell: usize,
        accepted: usize,
        proposed: usize,
    },

    #[error("zero normalization (A = 0) in gradient estimate for particle {particle}")]
    ZeroNormalization { particle: usize },

    #[error("covariance matrix is not positive definite even with jitter {jitter}")]
    CholeskyFailure { jitter: f64 },

    #[error("truncated normalizer underflow (Z < 1e-300)")]
    NormalizerUnderflow,

    #[error("particles must be sorted in ascending order")]
    UnsortedParticles,

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, WvgdError>;
