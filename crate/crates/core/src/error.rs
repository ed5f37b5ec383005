use thiserror::Error;

/// Errors produced by analysis and synthesis routines.
///
/// The variants are grouped by how the CLI maps them to exit codes:
/// validation problems (bad input), infeasibility (a rank test failed,
/// the requested quantity does not exist), and numerical failures.
#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("trajectory diverged at t = {0}")]
    Diverged(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
