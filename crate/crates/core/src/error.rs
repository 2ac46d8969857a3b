use thiserror::Error;

pub type Result<T> = std::result::Result<T, AbfError>;

#[derive(Debug, Error)]
pub enum AbfError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("explosive jump intensity: beta + gamma = {0} >= 1")]
    ExplosiveIntensity(f64),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("invalid auxiliary-model parameter: {0}")]
    InvalidAuxParameter(String),

    #[error("optimization failed; best incumbent {best:?} with log-likelihood {loglik}")]
    OptimizationFailure { best: Vec<f64>, loglik: f64 },

    #[error("degenerate regression: regressor has zero variance")]
    DegenerateRegression,

    #[error("reference table row {row} failed after {retries} resimulations: {reason}")]
    TableConstruction {
        row: usize,
        retries: usize,
        reason: String,
    },

    #[error("empty posterior: no draws retained")]
    EmptyPosterior,

    #[error("degenerate posterior: all grid weights underflow")]
    DegeneratePosterior,

    #[error("particle degeneracy at t = {t}: all weights are zero")]
    ParticleDegeneracy { t: usize },

    #[error("PMMH tuning failed: acceptance rate {acceptance:.4} after pilot adaptation")]
    TuningFailure { acceptance: f64 },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("inference failed in window {index}: {source}")]
    WindowFailure {
        index: usize,
        #[source]
        source: Box<AbfError>,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
