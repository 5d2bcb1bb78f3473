//! Library side of the `specconsist` command-line tool.

pub mod commands;
pub mod config;
pub mod matrix;

pub use commands::{
    cmd_analyze, cmd_compare, cmd_reconstruct, cmd_synth, AnalyzeReport, CompareEntry,
    CompareOutcome, ReconstructReport,
};
pub use config::{Method, RunConfig};

pub const EXIT_OK: i32 = 0;
/// Finished, but with nothing to do (an empty corpus, say).
pub const EXIT_WARNING: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] specconsist::Error),

    /// Bad flags, config or input files.
    #[error("{0}")]
    Usage(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use specconsist::Error;
        match self {
            CliError::Core(Error::Divergence { .. }) => EXIT_DIVERGED,
            CliError::Core(Error::Io(_)) | CliError::Io(_) | CliError::Csv(_) => EXIT_IO,
            CliError::Core(_) | CliError::Usage(_) => EXIT_INPUT,
        }
    }
}
