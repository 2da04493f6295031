use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Residuals carried by a solver failure so callers can inspect how far the
/// last iterate was from optimality.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    pub best_weights: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub max_violation: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Inputs with inconsistent shapes.
    Dimension(String),
    /// A value outside the domain of a formula (non-positive ratio denominator,
    /// empty vector, ...).
    Domain(String),
    /// A required input was not supplied.
    Precondition(String),
    /// The panel failed validation.
    InvalidPanel(String),
    /// Iteration caps were reached before the stopping rule fired.
    NonConvergence(SolverTrace),
    /// The quadratic constraints could not be satisfied.
    Infeasible(SolverTrace),
    /// A failure attached to a specific budget vector of the fusion grid.
    Budget {
        budget: [f64; 3],
        source: alloc::boxed::Box<Error>,
    },
}

impl Error {
    /// True when the root cause is constraint infeasibility.
    pub fn is_infeasible(&self) -> bool {
        match self {
            Error::Infeasible(_) => true,
            Error::Budget { source, .. } => source.is_infeasible(),
            _ => false,
        }
    }

    /// Solver residuals, looking through budget wrappers.
    pub fn trace(&self) -> Option<&SolverTrace> {
        match self {
            Error::Infeasible(t) | Error::NonConvergence(t) => Some(t),
            Error::Budget { source, .. } => source.trace(),
            _ => None,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension(msg) => write!(f, "dimension mismatch: {msg}"),
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Precondition(msg) => write!(f, "precondition failed: {msg}"),
            Error::InvalidPanel(msg) => write!(f, "invalid panel: {msg}"),
            Error::NonConvergence(t) => write!(
                f,
                "solver did not converge after {} outer / {} inner iterations \
                 (objective {:.3e}, kkt residual {:.3e}, max violation {:.3e})",
                t.outer_iterations, t.inner_iterations, t.objective, t.kkt_residual, t.max_violation
            ),
            Error::Infeasible(t) => write!(
                f,
                "matching constraints are infeasible (max violation {:.3e} after {} outer \
                 iterations); increase eta_z / eta_x",
                t.max_violation, t.outer_iterations
            ),
            Error::Budget { budget, source } => write!(
                f,
                "budget (b_F={:.4}, b_Z={:.4}, b_X={:.4}): {source}",
                budget[0], budget[1], budget[2]
            ),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
