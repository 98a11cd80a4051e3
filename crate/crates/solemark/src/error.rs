use thiserror::Error;

/// Errors produced by model construction, file parsing, and inference.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },

    #[error("invalid grid coordinate ({a1}, {a2})")]
    OutOfGrid { a1: i32, a2: i32 },

    #[error("kernel offset ({di}, {dj}) outside supported window")]
    KernelOffset { di: i32, dj: i32 },

    #[error("invalid coarse map: {0}")]
    CoarseMap(String),

    #[error("degenerate model: every cell weight is zero")]
    DegenerateModel,

    #[error("accidental {accidental} on shoe {shoe} has no admissible cell within kernel reach")]
    ImpossibleAssignment { shoe: String, accidental: usize },

    #[error("instance too large for brute-force evaluation: {0}")]
    SizeGuard(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
