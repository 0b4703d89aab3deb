//! Shared error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Iteration history attached to a fixed-point solve that ran out of budget.
#[derive(Debug, Clone)]
pub struct DivergenceReport {
    /// Number of iterations performed before giving up.
    pub iterations: usize,
    /// L1 increment after each iteration, in order.
    pub increments: Vec<f64>,
    /// The increment at the point the budget ran out.
    pub last_increment: f64,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid must have a positive even number of subintervals, got {0}")]
    InvalidGrid(usize),

    #[error("{context}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("scalar operation applied to a function of dimension {0}")]
    NotScalar(usize),

    #[error("grids do not match: {0} vs {1} subintervals")]
    GridMismatch(usize, usize),

    #[error("leading coefficient vanishes near t = {t}: |a2| = {value:.3e}")]
    CoefficientSingularity { t: f64, value: f64 },

    #[error("degenerate Wronskian at t = {t}: |W| = {value:.3e}")]
    DegenerateWronskian { t: f64, value: f64 },

    #[error(
        "incompatible reduced system: boundary determinant {det:.6e} is below {threshold:.0e}"
    )]
    IncompatibleSystem { det: f64, threshold: f64 },

    #[error("boundary condition rows are linearly dependent")]
    DegenerateBoundaryRows,

    #[error("condition {condition} does not hold: {lhs:.6} >= {rhs:.6}")]
    ConditionViolated {
        condition: &'static str,
        lhs: f64,
        rhs: f64,
    },

    #[error("negative weight sample at t = {t}: {value:.6e}")]
    NegativeWeight { t: f64, value: f64 },

    #[error(
        "power iteration did not settle within {max_iter} iterations \
         (last estimates {previous:.9e}, {current:.9e})"
    )]
    PowerIterationStall {
        max_iter: usize,
        previous: f64,
        current: f64,
    },

    #[error(
        "fixed-point iteration exceeded {} iterations (last increment {:.3e})",
        .0.iterations,
        .0.last_increment
    )]
    Divergence(Box<DivergenceReport>),

    #[error("singular linear system in the finite-difference solver")]
    SingularSystem,

    #[error("search parameter must be positive, got {0}")]
    NonpositiveParameter(f64),

    #[error("{0}")]
    Precondition(String),

    #[error("declared metadata fails on probe samples: {0}")]
    MetadataViolation(String),
}
