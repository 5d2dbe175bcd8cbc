use std::path::PathBuf;

use lapilc_core::ilc::IlcError;
use lapilc_core::lifted::LiftedError;
use lapilc_core::track::TrackError;
use lapilc_core::vehicle::VehicleError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Writing an output file failed.
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// An input file (config, track, learned input) is missing or malformed.
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("track: {0}")]
    Track(#[from] TrackError),
    #[error("vehicle: {0}")]
    Vehicle(#[from] VehicleError),
    #[error("lifted model: {0}")]
    Lifted(#[from] LiftedError),
    #[error("learning operator: {0}")]
    Ilc(#[from] IlcError),
    #[error("lap {lap}: {source}")]
    Divergence {
        lap: usize,
        #[source]
        source: VehicleError,
    },
}

impl Error {
    pub(crate) fn input(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Input {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for output I/O, 3 for a diverged lap, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 1,
            Error::Divergence { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
