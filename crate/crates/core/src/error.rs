use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("second-excitation-manifold analytics need at least 2 emitters, got N = {0}")]
    ManifoldDomain(usize),

    #[error("operator is not Hermitian (relative deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("RK4 norm drift {drift:.3e} exceeds {limit:.1e}; retry with a smaller dt_max")]
    StepSize { drift: f64, limit: f64 },

    #[error("ambiguous eigenpair matching for level {row}: overlaps {first:.9} and {second:.9}")]
    AmbiguousMatch { row: usize, first: f64, second: f64 },

    #[error("closed form requires resonance, got omega_c - omega_m = {detuning:e}")]
    OffResonance { detuning: f64 },

    #[error("perturbative denominator vanishes: {0}")]
    Singular(String),

    #[error("beat fit failed: {0}")]
    Fit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
