use thiserror::Error;

use crate::solver::SolveStatus;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("syntax error at byte {pos} of `{input}`: {msg}")]
    Syntax { input: String, pos: usize, msg: String },
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("invalid problem file: {0}")]
    Problem(String),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum RoaError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("insufficient moment degree: need {needed}, have {available}")]
    InsufficientMomentDegree { needed: u32, available: u32 },
    #[error("degree budget violated: {0}")]
    DegreeBudget(String),
    #[error("empty multiplier basis: {0}")]
    EmptyMultiplierBasis(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("solver finished with status {status:?}: {detail}")]
    Solver { status: SolveStatus, detail: String },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("integration step underflow while locating boundary crossing")]
    StepUnderflow,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl RoaError {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            RoaError::Parse(_) | RoaError::InvalidInput(_) | RoaError::DimensionMismatch(_) => 2,
            RoaError::Validation(_) => 4,
            RoaError::Io(_) => 1,
            _ => 3,
        }
    }
}

pub type Result<T, E = RoaError> = std::result::Result<T, E>;
