//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by the solvers, approximation pipeline, and optimiser.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("jet centre/order mismatch: ({0}, {1}) vs ({2}, {3})")]
    JetMismatch(f64, usize, f64, usize),

    #[error("jet division by series with zero leading coefficient")]
    ZeroLeadingCoefficient,

    #[error("special function argument must be positive, got {0}")]
    NonPositiveArgument(f64),

    #[error("mesh geometry error: {0}")]
    Geometry(String),

    #[error("boundary operator matrix is singular at omega = {0}")]
    SingularOperator(f64),

    #[error("rational fit did not converge: relative residual {residual:.3e} (degrees [{m}, {n}])")]
    DegenerateFit { residual: f64, m: usize, n: usize },

    #[error("polynomial division requires a nonzero leading denominator coefficient")]
    ZeroLeadingDenominator,

    #[error("root finding did not converge after {iterations} iterations (max residual {residual:.3e})")]
    RootsNotConverged { iterations: usize, residual: f64 },

    #[error("partial fraction poles too close together (min gap {gap:.3e})")]
    ClusteredPoles { gap: f64 },

    #[error("pole at {pole_re}+{pole_im}i lies within {distance:.3e} of the integration band")]
    PoleNearBand {
        pole_re: f64,
        pole_im: f64,
        distance: f64,
    },

    #[error("evaluation at or near a pole of the rational function (|denominator| = {0:.3e})")]
    PoleEvaluation(f64),

    #[error("near-multiple pole: |q'(pole)| too small relative to coefficient scale")]
    NearMultiplePole,

    #[error("requested tolerance {delta:.3e} unreachable at the expansion centre (error {error:.3e} at point {point})")]
    DegenerateRange {
        delta: f64,
        error: f64,
        point: usize,
    },

    #[error("level-set update degenerated (norm {0:.3e} after step)")]
    DegenerateUpdate(f64),

    #[error("projection system is rank deficient")]
    RankDeficient,

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
