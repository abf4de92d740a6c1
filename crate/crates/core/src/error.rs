use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation (bad arm id, empty set).
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value violates a stated bound.
    #[error("configuration error: {0}")]
    Config(String),

    /// An estimator could not produce estimates from the data it was given.
    #[error("estimation error: {0}")]
    Estimation(String),

    /// A linear system or iterative routine broke down numerically.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The mirror-descent solver hit its iteration cap above the target.
    #[error(
        "G-optimal design did not reach target {target} within {iterations} iterations (best objective {objective})"
    )]
    DesignNotConverged {
        weights: Vec<f64>,
        objective: f64,
        target: f64,
        iterations: usize,
    },

    /// The bandit instance violates a structural assumption (no feasible arm, zero gap).
    #[error("instance error: {0}")]
    Instance(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),

    /// Failure inside one round of an algorithm, with the round attached.
    #[error("round {round}: {source}")]
    InRound {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn in_round(round: usize, err: Error) -> Error {
        Error::InRound {
            round,
            source: Box::new(err),
        }
    }

    /// True for errors that originate from user-supplied configuration.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::Parse(_) | Error::Io { .. } => true,
            Error::InRound { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
