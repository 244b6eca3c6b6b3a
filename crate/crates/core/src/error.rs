//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("evaluation at the singular point x = 0")]
    SingularPoint,

    #[error("exponent {exponent} outside the admissible window [{lo}, {hi})")]
    ExponentOutOfWindow { exponent: f64, lo: f64, hi: f64 },

    #[error("quadrature failed to reach tolerance (worst location {worst_location}, error estimate {error_estimate:e})")]
    QuadratureFailure {
        worst_location: f64,
        error_estimate: f64,
    },

    #[error("kernel table tolerance not met at r = {worst_radius} (relative mismatch {mismatch:e} > {tol:e})")]
    TableTolerance {
        worst_radius: f64,
        mismatch: f64,
        tol: f64,
    },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("mollifier support {support} under-resolved by grid spacing {spacing} (need support >= 2h)")]
    UnderResolvedMollifier { support: f64, spacing: f64 },

    #[error("initial density not admissible: {0}")]
    BadInitialDensity(String),

    #[error("existence horizon degenerate: T = {t} exceeds T_max ~ {t_max}; refusing to run without an uncovered-regime waiver")]
    HorizonDegenerate { t: f64, t_max: f64 },

    #[error("fixed-point iteration exceeded {max_iter} iterations (last update {last_update:e})")]
    MaxIterExceeded { max_iter: usize, last_update: f64 },

    #[error("contraction ratio {ratio} >= 1 at iteration {iteration}")]
    ContractionFailure { iteration: usize, ratio: f64 },

    #[error("solution blow-up at step {step}: sup norm {norm:e} exceeds {limit:e}")]
    BlowUp { step: usize, norm: f64, limit: f64 },

    #[error("non-finite position for particle {particle} at step {step}")]
    NonFinite { particle: usize, step: usize },

    #[error("rejection sampler exceeded {0} proposals for a single point")]
    RejectionOverflow(usize),

    #[error("Wiener increments missing or incomplete (needed up to step {needed})")]
    MissingIncrements { needed: usize },

    #[error("time grids incompatible: {0}")]
    IncompatibleTimes(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
