use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not skew-symmetric (max asymmetry {0:.3e})")]
    NotSkew(f64),

    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("symplectic form is singular (smallest singular value {0:.3e})")]
    SingularForm(f64),

    #[error("metric is not positive definite (smallest eigenvalue {0:.3e})")]
    NotPositiveDefinite(f64),

    #[error("degenerate frame: A·Aᵀ eigenvalue {0:.3e} below tolerance")]
    DegenerateFrame(f64),

    #[error("generator {index} is not infinitesimally symplectic (residual {residual:.3e})")]
    NotSymplectic { index: usize, residual: f64 },

    #[error("generators {0} and {1} do not commute (residual {2:.3e})")]
    NotCommuting(usize, usize, f64),

    #[error("weight {0:.6} is not close to an integer")]
    NonIntegralWeight(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("invalid parameters for model `{model}`: {reason}")]
    InvalidParams { model: String, reason: String },

    #[error("model `{0}` has no symplectic structure")]
    NoSymplecticStructure(String),

    #[error("model `{0}` has no closed-form fixed point set")]
    NoClosedFormFixedPoints(String),

    #[error("Newton projection did not converge (final residual {0:.3e})")]
    NoConvergence(f64),

    #[error("integration step failed at t = {0}")]
    StepFailure(f64),

    #[error("start point is critical (gradient norm {0:.3e})")]
    CriticalStart(f64),

    #[error("flow budget exhausted after t = {0}")]
    BudgetExhausted(f64),

    #[error("limit point does not match any known critical point (distance {0:.3e})")]
    UnmatchedLimit(f64),

    #[error("critical balls overlap: {0}")]
    OverlappingBalls(String),

    #[error("no Morse coordinates available for {0}")]
    NoMorseChart(String),

    #[error("degenerate Hessian at fixed point {index} (eigenvalue {eigenvalue:.3e}); redraw ξ")]
    DegenerateHessian { index: usize, eigenvalue: f64 },

    #[error("level sampling failed: {failed} of {attempted} projections diverged")]
    SamplingFailure { failed: usize, attempted: usize },

    #[error("no good projection found in {0} trials")]
    TrialsExhausted(usize),

    #[error("grid too coarse: {grid_n} nodes for degree {degree}")]
    GridTooCoarse { grid_n: usize, degree: usize },

    #[error("grid mismatch: {0} vs {1}")]
    GridMismatch(usize, usize),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
