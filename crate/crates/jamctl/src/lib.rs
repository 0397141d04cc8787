//! Driver layer for the radar anti-jamming laboratory: run configuration,
//! dataset and checkpoint file formats, CSV/PGM emission, the
//! recognizer-in-the-loop observation filter, and the subcommand
//! implementations behind the `jamctl` binary.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod csvio;
pub mod dataset;
pub mod loop_filter;
pub mod pgm;
pub mod report;

/// Process exit codes shared by the binary and its tests.
pub mod exit_codes {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const IO: i32 = 3;
    pub const NUMERIC: i32 = 4;
}

/// Command-level error classified for the process exit code.
#[derive(Debug)]
pub enum CmdError {
    Config(String),
    Io(String),
    Numeric(String),
}

impl std::fmt::Display for CmdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CmdError::Config(m) => write!(f, "config error: {m}"),
            CmdError::Io(m) => write!(f, "io error: {m}"),
            CmdError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl std::error::Error for CmdError {}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Config(_) => exit_codes::CONFIG,
            CmdError::Io(_) => exit_codes::IO,
            CmdError::Numeric(_) => exit_codes::NUMERIC,
        }
    }
}

impl From<std::io::Error> for CmdError {
    fn from(e: std::io::Error) -> Self {
        CmdError::Io(e.to_string())
    }
}

impl From<jamlab_core::Error> for CmdError {
    fn from(e: jamlab_core::Error) -> Self {
        match e {
            jamlab_core::Error::InvalidConfig(_)
            | jamlab_core::Error::InvalidParams(_)
            | jamlab_core::Error::MissingClass(_) => CmdError::Config(e.to_string()),
            other => CmdError::Numeric(other.to_string()),
        }
    }
}

pub type CmdResult<T> = Result<T, CmdError>;
