use std::path::PathBuf;

/// Errors produced by the reconstruction library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid format: {0}")]
    Format(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("mesh is empty")]
    EmptyMesh,

    #[error("mesh is not watertight: {boundary_edges} boundary edges")]
    NotWatertight { boundary_edges: usize },

    #[error("topology mismatch: {0}")]
    TopologyMismatch(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("graph node {0} has degree zero")]
    IsolatedNode(usize),

    #[error("landmark {index} ({name}) is not covered by any view")]
    UncoveredLandmark { index: usize, name: String },

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("singular system ({unknowns} unknowns, {constrained} constrained rows): {message}")]
    Singular {
        unknowns: usize,
        constrained: usize,
        message: String,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
