use crate::solvers::SolveTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid STFT or solver configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// The shifted-square window sum vanishes somewhere, so no dual window exists.
    #[error("degenerate window: shifted-square sum is zero at offset {offset}")]
    DegenerateWindow { offset: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("spectrogram and kernel were built from different STFT configurations")]
    ConfigMismatch,

    #[error("undefined measure: {0}")]
    UndefinedMeasure(String),

    /// Non-finite loss during descent. The trace holds every completed iteration.
    #[error("solver diverged at iteration {iteration}")]
    Divergence {
        iteration: usize,
        trace: Box<SolveTrace>,
    },

    /// Malformed or unsupported WAV data.
    #[error("wav error: {0}")]
    Wav(hound::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<hound::Error> for Error {
    fn from(e: hound::Error) -> Self {
        match e {
            // hound reports short reads as `Other`.
            hound::Error::IoError(io)
                if matches!(
                    io.kind(),
                    std::io::ErrorKind::UnexpectedEof | std::io::ErrorKind::Other
                ) =>
            {
                Error::Input(format!("truncated wav file: {io}"))
            }
            hound::Error::IoError(io) => Error::Io(io),
            other => Error::Wav(other),
        }
    }
}
