use thiserror::Error;

/// Errors produced anywhere in the simulator.
#[derive(Debug, Error)]
pub enum SimError {
    /// Bad configuration: dimension mismatches, unknown ids, invalid knobs.
    #[error("configuration error: {0}")]
    Config(String),
    /// Bad runtime input: misaligned lengths, out-of-range labels.
    #[error("input error: {0}")]
    Input(String),
    /// Numeric failure: NaN/Inf where finiteness is required.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Malformed external data (IDX/CSV/JSON).
    #[error("parse error: {0}")]
    Parse(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl SimError {
    pub fn config(msg: impl Into<String>) -> Self {
        SimError::Config(msg.into())
    }
    pub fn input(msg: impl Into<String>) -> Self {
        SimError::Input(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        SimError::Numeric(msg.into())
    }
    pub fn parse(msg: impl Into<String>) -> Self {
        SimError::Parse(msg.into())
    }

    /// Process exit code for the CLI: 2 for config/validation, 3 for runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) | SimError::Input(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
