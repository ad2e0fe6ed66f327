use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("triple set too large: |D_S| = {size} exceeds cap {cap}")]
    TripleSetTooLarge { size: u64, cap: u64 },

    #[error("index out of range: {0}")]
    Bounds(String),

    #[error("model file format error: {0}")]
    Format(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("unknown user id: {0}")]
    UnknownUser(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 for usage/IO/config problems,
    /// 1 for runtime and numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. }
            | Error::Io(_)
            | Error::Config(_)
            | Error::Format(_)
            | Error::UnknownUser(_) => 2,
            Error::TripleSetTooLarge { .. }
            | Error::Bounds(_)
            | Error::Numerical(_)
            | Error::DimensionMismatch(_) => 1,
        }
    }
}
