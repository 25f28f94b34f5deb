use std::io;

use thiserror::Error;

use crate::fock::ModeLabel;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate mode label {0}")]
    DuplicateMode(ModeLabel),
    #[error("truncation must admit at least one photon")]
    ZeroTruncation,
    #[error("mode {0} is not part of the basis")]
    UnknownMode(ModeLabel),
    #[error("network matrix is not unitary (max deviation {deviation:.3e})")]
    NonUnitary { deviation: f64 },
    #[error("network shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("mode mismatch: {0}")]
    ModeMismatch(String),
    #[error("delay would send {input} backwards in time to {output}")]
    Acausal { input: ModeLabel, output: ModeLabel },
    #[error("emitter ancilla {0} cannot enter a linear-optical network")]
    AncillaInNetwork(ModeLabel),
    #[error("a term with {photons} photons exceeds the truncation n_max = {n_max}")]
    TruncationOverflow { photons: u32, n_max: u32 },
    #[error("photon number mismatch: {input} in, {output} out")]
    PhotonNumberMismatch { input: u32, output: u32 },
    #[error("post-selection has zero probability")]
    EmptyOutcome,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("time tags are not sorted at index {index}")]
    Unsorted { index: usize },
    #[error("malformed tag file: {0}")]
    TagFormat(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown anchor {0:?}")]
    UnknownAnchor(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Error {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True when the root cause is a problem with user configuration rather
    /// than a runtime failure.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Context { source, .. } => source.is_config(),
            Error::Config(_) | Error::InvalidParameter(_) | Error::Json(_) => true,
            _ => false,
        }
    }
}
