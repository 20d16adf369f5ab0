use thiserror::Error;

/// Errors raised by the simulator and optimizer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("degenerate graph: C_max equals C_min")]
    DegenerateGraph,

    #[error("graph too large for enumeration: {0} nodes")]
    GraphTooLarge(usize),

    #[error("augmented dimension {0} exceeds the supported maximum")]
    DimensionOverflow(usize),

    #[error("empty control schedule")]
    EmptySchedule,

    #[error("jump probability {dp:.4} exceeds 0.1; reduce dt (currently {dt})")]
    StepTooLarge { dp: f64, dt: f64 },

    #[error("empty trajectory ensemble")]
    EmptyEnsemble,

    #[error("non-finite objective at iteration {iteration}")]
    NonFiniteObjective { iteration: usize },

    #[error("eigendecomposition failed")]
    Eigen,

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
