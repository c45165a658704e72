use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("mesh import, line {line}: {msg}")]
    MeshImport { line: usize, msg: String },

    #[error("unsupported quadrature degree {0} (supported: 1..=10)")]
    QuadratureDegree(usize),

    #[error("no basis tabulation for {family}_{degree}")]
    UnsupportedElement { family: &'static str, degree: usize },

    #[error("invalid function space: {0}")]
    Space(String),

    #[error("point ({0}, {1}) lies outside the mesh")]
    PointOutside(f64, f64),

    #[error("space mismatch: {0}")]
    SpaceMismatch(String),

    #[error("singular matrix (pivot at reduced index {pivot:?}): {msg}")]
    Singular { pivot: Option<usize>, msg: String },

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("postcondition violated: {0}")]
    Postcondition(String),

    #[error("startup iteration did not converge in {iterations} iterations (last update {residual:e})")]
    Startup { iterations: usize, residual: f64 },

    #[error("step {step}, {substep}: {source}")]
    Step {
        step: usize,
        substep: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid parameter {key}: {msg}")]
    Parameter { key: String, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(key: &str, msg: impl Into<String>) -> Self {
        Error::Parameter {
            key: key.to_string(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_step(self, step: usize, substep: &'static str) -> Self {
        Error::Step {
            step,
            substep,
            source: Box::new(self),
        }
    }
}
