use thiserror::Error;

/// Errors surfaced by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite entry: {0}")]
    NonFiniteEntry(String),

    #[error("SVD sweep failed to converge within {0} sweeps")]
    IterationLimit(usize),

    #[error("point violates the latent domain: {0}")]
    DomainViolation(String),

    #[error("map sampling exhausted {0} draws without satisfying the faithfulness guard")]
    ResampleLimit(usize),

    #[error("algorithm requires one-dimensional control and latent spaces per player")]
    NotSeparable,

    #[error("representation map derivative vanished (|phi'| < {0:e})")]
    DerivativeVanished(f64),

    #[error("iterate became non-finite at step {0}")]
    NonFiniteIterate(u64),

    #[error("trajectory was produced without per-step recording; rerun with template recording enabled")]
    MissingRecording,
}

pub type Result<T> = std::result::Result<T, Error>;
