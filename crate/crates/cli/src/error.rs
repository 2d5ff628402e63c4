use qsd_core::QsdError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(QsdError),
    #[error("output: {0}")]
    Output(String),
}

impl CliError {
    /// 1 for configuration errors, 2 for everything raised while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) | CliError::Output(_) => 2,
        }
    }
}

impl From<QsdError> for CliError {
    fn from(e: QsdError) -> Self {
        match e {
            // rejected before any stepping: a bad parameter combination
            QsdError::InvalidParameter(m) => CliError::Config(m),
            QsdError::NonPositiveTimeStep(dt) => {
                CliError::Config(format!("time step must be positive, got {dt}"))
            }
            e @ (QsdError::StepTooLarge { .. } | QsdError::OutsideBlochBall { .. }) => {
                CliError::Config(e.to_string())
            }
            QsdError::Io(m) => CliError::Output(m),
            other => CliError::Numerical(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Output(e.to_string())
    }
}
