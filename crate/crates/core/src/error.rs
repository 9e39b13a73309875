use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("steering angle {delta} is outside (-pi/2, pi/2)")]
    SteeringDomain { delta: f64 },
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("index out of range: {0}")]
    Index(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("binary vector entry {value} at position {index} is not 0 or 1")]
    NotBinary { index: usize, value: u8 },
    #[error("probability {value} at position {index} is outside [0, 1]")]
    NotProbability { index: usize, value: f64 },
    #[error("exhaustive enumeration over d = {d} bits exceeds the limit of {max}")]
    TooLarge { d: usize, max: usize },
    #[error("state diverged: {0}")]
    Divergence(String),
    #[error("all Boltzmann weights underflowed")]
    DegenerateWeights,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
