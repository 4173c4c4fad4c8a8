use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("svd did not converge after {sweeps} sweeps (off-diagonal residual {residual:e})")]
    SvdNoConvergence { sweeps: usize, residual: f64 },

    #[error("singular input Gram: sigma_min/sigma_max = {ratio:e}")]
    SingularGram { ratio: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("undefined similarity: {0}")]
    UndefinedSimilarity(&'static str),

    #[error("weights diverged after update (|W|_F = {norm:e})")]
    Divergence { norm: f64 },

    #[error("training diverged in block {block} at step {step}: {detail}")]
    TrainingDivergence { block: usize, step: usize, detail: String },

    #[error("memory constraint: {0}")]
    MemoryConstraint(String),

    #[error("format error at byte {offset}: {detail}")]
    Format { offset: u64, detail: String },

    #[error("config error at line {line}, column {column}: {message}")]
    Config { line: usize, column: usize, message: String },

    #[error("dataset not found: {0}")]
    DatasetMissing(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    /// Short machine-readable tag, used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::NonFinite(_) => "non_finite",
            Error::SvdNoConvergence { .. } => "svd_no_convergence",
            Error::SingularGram { .. } => "singular_gram",
            Error::NotPositiveDefinite => "not_positive_definite",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::UndefinedSimilarity(_) => "undefined_similarity",
            Error::Divergence { .. } => "divergence",
            Error::TrainingDivergence { .. } => "training_divergence",
            Error::MemoryConstraint(_) => "memory_constraint",
            Error::Format { .. } => "format",
            Error::Config { .. } => "config",
            Error::DatasetMissing(_) => "dataset_missing",
            Error::Io(_) => "io",
        }
    }
}
