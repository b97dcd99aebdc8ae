use crate::waves::WaveSolution;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("evaluation point z = {z} outside tabulated range [{lo}, {hi}]")]
    OutOfRange { z: f64, lo: f64, hi: f64 },

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("confinement lost: nu = {nu} must be below delta = {delta}")]
    ConfinementLost { nu: f64, delta: f64 },

    #[error("solver failed: {0}")]
    SolverFailure(String),

    #[error("continuation breakdown at tau = {tau}: {message}")]
    ContinuationBreakdown {
        tau: f64,
        message: String,
        /// Last successfully converged solution along the homotopy path.
        last_good: Box<WaveSolution>,
    },

    #[error("extinction regime: lambda = {lambda} >= 0, no invasion speed defined")]
    ExtinctionRegime { lambda: f64 },

    #[error("time integration unstable (sup = {sup:.3e} at t = {t}): reduce dt")]
    Instability { t: f64, sup: f64 },

    #[error("domain too small: {0}")]
    DomainTooSmall(String),

    #[error("sandwich bound violated at node (x = {x}, z = {z}): {message}")]
    SandwichViolation { x: f64, z: f64, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
