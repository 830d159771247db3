use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no trials")]
    NoTrials,

    #[error("mismatched grids")]
    GridMismatch,

    #[error("missing instrument level {0}")]
    MissingLevel(u32),

    #[error("ill-posed: increase eta or reduce J")]
    IllPosed,

    #[error("support too small for basis")]
    SupportTooSmall,

    #[error("bound violated: intensity {intensity} exceeds dominating rate {bound} at t = {t}")]
    BoundViolated { t: f64, intensity: f64, bound: f64 },

    #[error("covariance factorization failed after jitter escalation")]
    CovarianceFactorization,

    #[error("weak/null instrument")]
    WeakInstrument,

    #[error("null truth")]
    NullTruth,

    #[error("instrument has no effect: (Psi f) == 0")]
    NoInstrumentEffect,

    #[error("resonant self-excitation")]
    ResonantSelfExcitation,

    #[error("non-Hermitian input")]
    NonHermitian,

    #[error("degenerate bootstrap")]
    DegenerateBootstrap,

    #[error("stratification impossible: {0}")]
    Stratification(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
