use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    /// A value violates a physical or structural bound.
    #[error("{field}: {message}")]
    InvalidParameter { field: String, message: String },

    #[error("stoichiometry {x} outside OCP table range [{min}, {max}]")]
    OcpDomain { x: f64, min: f64, max: f64 },

    /// The simulated cell left its admissible region.
    #[error("simulation left its valid domain at t = {time_s} s: {reason}")]
    SimulationDomain { time_s: f64, reason: String },

    #[error("trajectory timestamps do not match")]
    TimestampMismatch,

    #[error("singular Fisher matrix (condition number {condition:e})")]
    SingularMatrix { condition: f64 },

    #[error("no feasible excitation found; best candidate {best:?} violates constraints by {violation}")]
    NoFeasibleDesign { best: Vec<f64>, violation: f64 },

    #[error("{excluded} of {total} Monte Carlo replicates failed to converge")]
    TooManyExclusions { excluded: usize, total: usize },

    #[error("{0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
