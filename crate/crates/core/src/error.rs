use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("root finder could not bracket a solution for {what}")]
    NoRoot { what: &'static str },

    #[error("degenerate discrete grid: {0}")]
    DegenerateGrid(String),

    #[error("invalid LF parameters: {0}")]
    InvalidParams(String),

    #[error("sample rates differ: {0} Hz vs {1} Hz")]
    SampleRateMismatch(f64, f64),

    #[error("normal equations are singular ({0})")]
    SingularNormalEquations(String),

    #[error("model order too large for window: N={n}, p={p}, q={q}")]
    OrderTooLarge { n: usize, p: usize, q: usize },

    #[error("resonance at {freq_hz} Hz is at or above Nyquist ({nyquist_hz} Hz)")]
    NyquistViolation { freq_hz: f64, nyquist_hz: f64 },

    #[error("no voiced region found")]
    NoVoicedRegion,

    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("three-period window of {len} samples exceeds the feature size {max}")]
    WindowOverflow { len: usize, max: usize },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("reference value is zero at index {0}")]
    ZeroTruth(usize),

    #[error("length mismatch: {0} vs {1} samples")]
    LengthMismatch(usize, usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that stem from numerics rather than data or usage.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoRoot { .. }
                | Error::SingularNormalEquations(_)
                | Error::Diverged { .. }
                | Error::DegenerateGrid(_)
        )
    }
}
