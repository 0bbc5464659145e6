use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid order: r must have at least one nonzero component (r != 0)")]
    ZeroOrder,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("distributional-kernel regime: r = {0} <= -1/2 has no absolutely convergent kernel")]
    DistributionalKernel(f64),

    #[error("kernel of integer order {0} has finite support; there is no decay to fit")]
    FiniteSupport(i64),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("the plain frequency grid contains the pole at theta = 0; select the half-integer grid or zero-mode projection")]
    PolarZeroMode,

    #[error("energy {energy} lies within {guard:e} of threshold {threshold}")]
    ThresholdGuard { energy: f64, threshold: f64, guard: f64 },

    #[error("model size {size} exceeds the dense cap {cap}")]
    SizeCap { size: usize, cap: usize },

    #[error("kernel table covers |k| <= {have}, need {need}")]
    MissingTableRange { have: usize, need: usize },

    #[error("potential support overflows the model window at site {0:?}")]
    SupportOverflow(Vec<i64>),

    #[error("near-singular solve (relative pivot {0:e})")]
    Singular(f64),

    #[error("exceptional energy {0}: id + R0 W is not invertible")]
    ExceptionalEnergy(f64),

    #[error("no bulk-supported spectral vectors in window [{0}, {1}]")]
    EmptyBulkSubspace(f64, f64),

    #[error("spectral shift did not stabilize: {0}")]
    NotStabilized(String),

    #[error("grid of {0} points exceeds the memory guard")]
    GridTooLarge(usize),

    #[error("negative order on axis {0}: the operator is unbounded, use the eigensolve route")]
    Unbounded(usize),

    #[error("failed to converge: {0}")]
    NoConvergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
