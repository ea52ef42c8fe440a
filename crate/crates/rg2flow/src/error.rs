use thiserror::Error;

/// Errors shared by all modules of the laboratory.
#[derive(Debug, Error)]
pub enum RgError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("grid resolution too low: N = {n}, minimum is {min}")]
    Resolution { n: usize, min: usize },

    #[error("rescaling factor must be positive, got {0}")]
    InvalidScale(f64),

    #[error("coupling must be positive, got {0}")]
    InvalidCoupling(f64),

    #[error("field representation does not match geometry class: {0}")]
    Representation(String),

    #[error("weak-parabolicity condition fails: margin = {margin}")]
    NotParabolic { margin: f64 },

    #[error("metric degenerated during evolution at t = {t}: {reason}")]
    DegenerateMetric { t: f64, reason: String },

    #[error("time step {dt} violates the explicit stability bound {bound}")]
    StepSize { dt: f64, bound: f64 },

    #[error("density positivity lost during measure evolution")]
    Positivity,

    #[error("linear solver failed: residual = {residual}")]
    SolverFailure { residual: f64 },

    #[error("eigensolver did not converge: {0}")]
    EigenFailure(String),

    #[error("implicit scaling relation: Newton iteration left the branch at t = {t} (last bracket [{lo}, {hi}])")]
    BranchJump { t: f64, lo: f64, hi: f64 },

    #[error("operation requires the zero-drift gauge but |xi| = {0}")]
    GaugeRequiresZeroDrift(f64),

    #[error("alternating minimization stalled: objective rose from {previous} to {current} at sweep {sweep}")]
    NonConvergence {
        sweep: usize,
        previous: f64,
        current: f64,
    },

    #[error("trajectory has too few snapshots: {got} (need at least {need})")]
    InsufficientData { got: usize, need: usize },

    #[error("trajectories are sampled incompatibly: {0}")]
    Alignment(String),

    #[error("{class} does not support {what} in the symmetry-reduced representation")]
    UnsupportedClass { class: String, what: String },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, RgError>;
