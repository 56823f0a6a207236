use std::path::PathBuf;

use thiserror::Error;

use crate::model::Model;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("graph error: {0}")]
    Graph(String),

    #[error("no path between tokens {src} and {dst}; components: {components:?}")]
    Path {
        src: usize,
        dst: usize,
        components: Vec<Vec<usize>>,
    },

    #[error("index {index} out of range for {what} of size {len}")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("sequence length {len} exceeds position table size {max_len}")]
    Length { len: usize, max_len: usize },

    #[error("unknown label {0:?}")]
    Label(String),

    #[error("instance {id}: {message}")]
    Instance { id: String, message: String },

    #[error("line {line}: invalid record at `{path}`: {message}")]
    Parse {
        line: usize,
        path: String,
        message: String,
    },

    #[error("function evaluation produced a non-finite value: {0}")]
    Evaluation(String),

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged {
        epoch: usize,
        loss: f64,
        last_good: Box<Model>,
    },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable kind, used for error records on the command line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::Config(_) => "config",
            Error::Graph(_) => "graph",
            Error::Path { .. } => "path",
            Error::Index { .. } => "index",
            Error::Length { .. } => "length",
            Error::Label(_) => "label",
            Error::Instance { .. } => "instance",
            Error::Parse { .. } => "parse",
            Error::Evaluation(_) => "evaluation",
            Error::Diverged { .. } => "diverged",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
