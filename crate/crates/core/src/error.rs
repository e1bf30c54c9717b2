use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate particle system")]
    DegenerateParticles,

    #[error("degenerate perturbation kernel: zero weighted variance in dimension {dimension}")]
    DegenerateKernel { dimension: usize },

    #[error("zero-spread sample")]
    ZeroSpread,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("ratio fit did not converge after {iterations} iterations (last score {score}, step {step})")]
    RatioNonConvergence {
        iterations: usize,
        score: f64,
        step: f64,
    },

    #[error("non-finite density ratio evaluation at {at:?}")]
    NonFiniteRatio { at: Vec<f64> },

    #[error(
        "acceptance starvation at tolerance {epsilon}: {accepted} accepted after {attempts} attempts"
    )]
    AcceptanceStarvation {
        epsilon: f64,
        attempts: u64,
        accepted: usize,
    },

    #[error("simulator produced non-finite output at {theta:?} after {retries} retries")]
    SimulatorFailure { theta: Vec<f64>, retries: u32 },

    #[error("all {attempted} replicate runs failed; first failure: {first}")]
    NoSurvivingRuns { attempted: usize, first: String },

    #[error("not implemented: {0}")]
    NotImplemented(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
