use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Which boundary potential a diagnostic refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Endpoint {
    Start,
    End,
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::Start => write!(f, "u0"),
            Endpoint::End => write!(f, "u1"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("admissibility violated at {endpoint} node {node}: raw phase {phase:.6} needs to exceed {bound:.6}")]
    Admissibility {
        endpoint: Endpoint,
        node: usize,
        phase: f64,
        bound: f64,
    },

    #[error("barrier construction failed: {0}")]
    BarrierFailure(String),

    #[error("newton did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("line search collapsed after {iterations} iterations (residual {residual:.3e})")]
    StepCollapse { iterations: usize, residual: f64 },

    #[error("linear solver failed: {0}")]
    LinearSolver(String),

    #[error("accepted iterate violates the barrier sandwich by {violation:.3e}")]
    SandwichViolation { violation: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures that a smaller continuation step might cure.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. } | Error::StepCollapse { .. } | Error::LinearSolver(_)
        )
    }
}
