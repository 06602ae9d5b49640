//! Error type carrying the process exit code.

use std::fmt;

use tguard_core::checkpoint::CheckpointError;
use tguard_core::dfg::DfgError;
use tguard_core::eval::EvalError;
use tguard_core::gnn::GnnError;
use tguard_core::quant::QuantError;
use tguard_core::verilog::FrontendError;

pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USER: i32 = 2;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn user(message: impl fmt::Display) -> Self {
        CliError {
            code: EXIT_USER,
            message: message.to_string(),
        }
    }

    pub fn internal(message: impl fmt::Display) -> Self {
        CliError {
            code: EXIT_INTERNAL,
            message: message.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub type CliResult<T> = Result<T, CliError>;

impl From<FrontendError> for CliError {
    fn from(e: FrontendError) -> Self {
        CliError::user(e)
    }
}

impl From<DfgError> for CliError {
    fn from(e: DfgError) -> Self {
        CliError::user(e)
    }
}

impl From<GnnError> for CliError {
    fn from(e: GnnError) -> Self {
        match e {
            GnnError::InvalidConfig(_) | GnnError::EmptyTrainingSet => CliError::user(e),
            GnnError::ShapeMismatch(_) => CliError::internal(e),
        }
    }
}

impl From<QuantError> for CliError {
    fn from(e: QuantError) -> Self {
        match e {
            QuantError::Gnn(g) => g.into(),
            QuantError::Malformed(_) => CliError::user(e),
            _ => CliError::internal(e),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Gnn(g) => g.into(),
            CheckpointError::Quant(q) => q.into(),
            _ => CliError::user(e),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Gnn(g) => g.into(),
            EvalError::Quant(q) => q.into(),
            EvalError::TooFewDesigns { .. } | EvalError::InvalidFractions(_) => CliError::user(e),
            EvalError::PredictionCount { .. } => CliError::internal(e),
        }
    }
}
