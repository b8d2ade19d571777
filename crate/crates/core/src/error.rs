use thiserror::Error;

/// Errors raised anywhere in the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("grid too small: {axis} has {n} nodes, stencil needs at least {min}")]
    GridTooSmall { axis: &'static str, n: usize, min: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:.3e}, tolerance {tol:.3e})")]
    NoConvergence { iterations: usize, residual: f64, tol: f64 },

    #[error("folded mesh: Jacobian changes sign at node (i={i}, j={j})")]
    FoldedMesh { i: usize, j: usize },

    #[error("Jacobian {jac:.3e} below floor {floor:.3e} at node (i={i}, j={j})")]
    JacobianFloor { i: usize, j: usize, jac: f64, floor: f64 },

    #[error("degenerate wall normal at node (i={i}, j={j})")]
    DegenerateNormal { i: usize, j: usize },

    #[error("boundary condition: {0}")]
    Boundary(String),

    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),

    #[error("non-finite loss at iteration {0}")]
    NonFiniteLoss(usize),

    #[error("rank deficiency: requested {requested} modes, only {available} positive eigenvalues")]
    Rank { requested: usize, available: usize },

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("missing retained activations; call forward before backward")]
    NoActivations,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether this error comes from the numerics rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::FoldedMesh { .. }
                | Error::JacobianFloor { .. }
                | Error::DegenerateNormal { .. }
                | Error::NonFiniteGradient(_)
                | Error::NonFiniteLoss(_)
                | Error::Rank { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
