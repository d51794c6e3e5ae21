//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("{path}:{line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },

    #[error("non-manifold topology: {0}")]
    Topology(String),

    #[error("support deficiency at ({x}, {y}): {found} usable contributors; widen the prior cutoff or refine the mesh")]
    SupportDeficiency { x: f64, y: f64, found: usize },

    #[error("dual Newton did not reach tolerance in {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("degenerate node geometry at ({x}, {y}): dual Hessian is singular")]
    DegenerateGeometry { x: f64, y: f64 },

    #[error("degenerate quadrature rule on cell {cell}")]
    DegenerateRule { cell: usize },

    #[error("projection degeneracy: nodal volume integral is not positive at node {node}")]
    ProjectionDegeneracy { node: usize },

    #[error("constraint coverage: no prescribed value for constrained dof {dof}")]
    ConstraintCoverage { dof: usize },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("problem has no exact solution fields: {0}")]
    UnsupportedProblem(String),

    #[error("point ({x}, {y}) lies outside the domain")]
    OutOfDomain { x: f64, y: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for configuration problems, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_)
            | Error::Config(_)
            | Error::Format { .. }
            | Error::Io(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
