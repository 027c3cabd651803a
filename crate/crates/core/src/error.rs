use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("link index {0} out of range 1..=6")]
    LinkIndex(usize),

    #[error("joint {joint} angle {angle} outside limits [{lo}, {hi}]")]
    JointLimit {
        joint: usize,
        angle: f64,
        lo: f64,
        hi: f64,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid transform: {0}")]
    InvalidTransform(String),

    #[error("invalid chain: {0}")]
    InvalidChain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("insufficient hits on link {link} face {face}: {got} < {need}")]
    InsufficientHits {
        link: usize,
        face: String,
        got: usize,
        need: usize,
    },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("graph has no safe nodes")]
    NoSafeNodes,

    #[error("unknown node {0}")]
    UnknownNode(usize),

    #[error("node {0} is not a plannable (safe, non-blacklisted) node")]
    NodeNotPlannable(usize),

    #[error(
        "no path from {start} to {goal}: start component has {start_component} nodes, goal component has {goal_component}"
    )]
    NoPath {
        start: usize,
        goal: usize,
        start_component: usize,
        goal_component: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("{stage}: missing input {path} (run the earlier stages first)")]
    MissingInput { stage: &'static str, path: PathBuf },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
