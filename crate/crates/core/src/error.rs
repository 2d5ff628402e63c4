use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QsdError {
    #[error("Bloch vector has length {norm} > 1 beyond the allowed slack")]
    OutsideBlochBall { norm: f64 },

    #[error("matrix is not a density matrix: {0}")]
    NotDensityMatrix(String),

    #[error("time step must be positive, got {0}")]
    NonPositiveTimeStep(f64),

    #[error("time step too large: |C|·sqrt(dt) = {value} must stay below {limit}")]
    StepTooLarge { value: f64, limit: f64 },

    #[error("degenerate map normalization Tr(MρM†) = {0}")]
    DegenerateNormalization(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite coefficient in {what} at step {step}")]
    NonFinite { what: &'static str, step: usize },

    #[error("state {value} outside the domain of the process ({domain})")]
    OutsideDomain { value: f64, domain: String },

    #[error("explicit scheme needs {required} sub-steps per stored step, limit is {limit}")]
    CflViolation { required: usize, limit: usize },

    #[error("negative density {value} at node {node}, time {time}")]
    NegativeDensity { value: f64, node: usize, time: f64 },

    #[error("query ({x}, {t}) outside the density field coverage")]
    OutOfRange { x: f64, t: f64 },

    #[error("diffusion coefficient D = {0} must be positive")]
    NonPositiveDiffusion(f64),

    #[error("process has no zero-current stationary density")]
    NoStationaryState,

    #[error("noise matrix must be diagonal for per-coordinate entropy evaluation")]
    NonDiagonalNoise,

    #[error("support mismatch: q = 0 where p = {p} > 0 at x = {x}")]
    SupportMismatch { x: f64, p: f64 },

    #[error("window too short: {0}")]
    WindowTooShort(String),

    #[error("not enough samples: {0}")]
    NotEnoughSamples(String),

    #[error("trajectory {index} failed: {source}")]
    Trajectory {
        index: usize,
        #[source]
        source: Box<QsdError>,
    },

    #[error("I/O: {0}")]
    Io(String),

    #[error("format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, QsdError>;

impl From<std::io::Error> for QsdError {
    fn from(e: std::io::Error) -> Self {
        QsdError::Io(e.to_string())
    }
}

impl From<csv::Error> for QsdError {
    fn from(e: csv::Error) -> Self {
        QsdError::Format(e.to_string())
    }
}

impl From<serde_json::Error> for QsdError {
    fn from(e: serde_json::Error) -> Self {
        QsdError::Format(e.to_string())
    }
}
