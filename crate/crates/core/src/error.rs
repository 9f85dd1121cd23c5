use thiserror::Error;

#[derive(Debug, Error)]
pub enum DppError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("parameter `{name}` must be positive and finite, got {value}")]
    NonPositiveParameter { name: String, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "kernel is not positive semi-definite: most negative eigenvalue {min_eigenvalue:e} \
         (largest {max_eigenvalue:e})"
    )]
    NotPositiveSemiDefinite { min_eigenvalue: f64, max_eigenvalue: f64 },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("kernel submatrix of sample {sample} is singular")]
    SingularSample { sample: usize },

    #[error("sample {sample} has {got} items but the model requires exactly {expected}")]
    CardinalityMismatch { sample: usize, expected: usize, got: usize },

    #[error("inconsistent truncation: partial eigenvalue sum {partial} exceeds trace {trace}")]
    InconsistentTruncation { partial: f64, trace: f64 },

    #[error("the model has no exact normalizer; use a bounded sampler")]
    NoExactNormalizer,

    #[error(
        "bounded step unresolved with {eigenvalues} eigenvalues: threshold {threshold} \
         lies inside ({lower}, {upper})"
    )]
    BoundedStepUnresolved {
        eigenvalues: usize,
        threshold: f64,
        lower: f64,
        upper: f64,
    },

    #[error("insufficient truncation: tail weight {tail:e} exceeds required {required:e}")]
    InsufficientTruncation { tail: f64, required: f64 },

    #[error("initial state has a non-finite log density ({0})")]
    InvalidInitialState(f64),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, DppError>;

pub(crate) fn check_positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(DppError::NonPositiveParameter {
            name: name.to_string(),
            value,
        })
    }
}
