use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("unsupported dimension {0} (only 1 and 2 are implemented)")]
    UnsupportedDimension(u8),

    #[error("negative radius {0} passed to a radial kernel")]
    NegativeRadius(f64),

    #[error("kernel has zero mass; cannot sample displacements")]
    ZeroMassKernel,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),

    #[error("integrator failure: {0}")]
    Integrator(String),

    #[error("fixed-point iteration did not converge within {max_iter} sweeps (residual {residual:.3e}, tol {tol:.3e})")]
    PicardDiverged {
        max_iter: usize,
        residual: f64,
        tol: f64,
    },

    #[error("empty particle configuration")]
    EmptyConfiguration,

    #[error("particle budget exceeded: expected {expected:.3e} particles per replica, budget {budget:.3e}")]
    BudgetExceeded { expected: f64, budget: f64 },

    #[error("scale parameter {0} outside (0, 1]")]
    ScaleOutOfRange(f64),

    #[error("scale index ordering violated: require {lo} < {hi}")]
    ThetaOrdering { lo: f64, hi: f64 },

    #[error("interaction constant c = 0: the horizon is unbounded and delta/tau are undefined")]
    UnboundedHorizon,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
