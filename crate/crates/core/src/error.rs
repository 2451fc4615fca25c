use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown channel label `{0}`")]
    UnknownLabel(String),
    #[error("duplicate channel label `{0}`")]
    DuplicateLabel(String),
    #[error("invalid channel label `{0}`: expected z<node><x|y>, e.g. z6x")]
    BadLabel(String),
    #[error("unknown group id {0}")]
    UnknownGroup(u32),
    #[error("channel `{label}` appears in groups {first} and {second}")]
    OverlappingGroups { label: String, first: u32, second: u32 },
    #[error("invalid time series: {0}")]
    InvalidSeries(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("zero-length bar between nodes {0} and {1}")]
    ZeroLengthBar(u32, u32),
    #[error("unknown node {0}")]
    UnknownNode(u32),
    #[error("unknown spring k({0},{1})")]
    UnknownSpring(u32, u32),
    #[error("structure is not stable: node {node} is floating ({detail})")]
    FloatingNode { node: u32, detail: String },
    #[error("insufficient samples: {available} usable rows for {required} regressors")]
    InsufficientSamples { available: usize, required: usize },
    #[error("ill-conditioned regressor matrix (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },
    #[error("singular residual covariance (det = {det:.3e})")]
    DegenerateCovariance { det: f64 },
    #[error("unstable discretization: spectral radius {radius:.6} >= 1")]
    Unstable { radius: f64 },
    #[error("singular mass matrix")]
    SingularMass,
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::ZeroLengthBar(..)
            | Error::FloatingNode { .. }
            | Error::InsufficientSamples { .. }
            | Error::IllConditioned { .. }
            | Error::DegenerateCovariance { .. }
            | Error::Unstable { .. }
            | Error::SingularMass => ErrorKind::Numerical,
            Error::Io { .. } => ErrorKind::Io,
            Error::Stage { source, .. } => source.kind(),
            _ => ErrorKind::Input,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
