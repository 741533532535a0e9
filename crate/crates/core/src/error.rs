use std::path::PathBuf;

use thiserror::Error;

use crate::fusion::FusionOutcome;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The matrix failed a positive-definiteness check.
    #[error("matrix is not positive definite (minimum eigenvalue {min_eigenvalue:e})")]
    SingularMatrix { min_eigenvalue: f64 },

    /// Frank-Wolfe ran out of iterations; the best iterate is attached.
    #[error("fusion solver did not converge after {} iterations (gap {:e})", .0.iterations, .0.gap)]
    FusionNotConverged(Box<FusionOutcome>),

    #[error("trace relaxation did not converge after {iterations} Newton steps (gap {gap:e})")]
    RelaxationNotConverged { iterations: usize, gap: f64 },

    #[error("scenario generation failed after {attempts} attempts")]
    ScenarioGeneration { attempts: usize },

    #[error("topology generation failed after {attempts} attempts")]
    TopologyGeneration { attempts: usize },

    #[error("node {node} at step {step}: {source}")]
    Node {
        node: usize,
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn at_node(self, node: usize, step: usize) -> Self {
        Error::Node {
            node,
            step,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_trial(self, trial: usize) -> Self {
        Error::Trial {
            trial,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
