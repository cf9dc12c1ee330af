use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("unsupported quadrature degree {degree} (max {max})")]
    UnsupportedQuadrature { degree: usize, max: usize },

    #[error("function space mismatch: {0}")]
    SpaceMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("infeasible box: {0}")]
    InfeasibleBox(String),

    #[error("boundary data given on the wrong boundary part: {0}")]
    WrongBoundary(String),

    #[error("Picard iteration did not converge after {iterations} iterations (last change {change:.3e})")]
    PicardDiverged { iterations: usize, change: f64 },

    #[error("linear solve failed: relative residual {residual:.3e} above tolerance {tol:.3e}")]
    LinearSolveFailed { residual: f64, tol: f64 },

    #[error("singular pivot in band factorization at row {0}")]
    SingularMatrix(usize),

    #[error("eigenvalue iteration did not converge after {0} iterations")]
    EigenNotConverged(usize),

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
