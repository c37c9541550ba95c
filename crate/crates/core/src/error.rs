use crate::graph::NodeId;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("non-finite weight in layer {layer}")]
    NonFiniteWeight { layer: usize },

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("node kind {kind} is not supported by {op}")]
    Unsupported { op: &'static str, kind: &'static str },

    #[error("missing bounds for node {0}")]
    MissingBounds(NodeId),

    #[error("frontier node {0} is not reachable from the output")]
    UnreachableFrontier(NodeId),

    #[error("inverted bounds at index {index}: lower {lower} > upper {upper}")]
    InvertedBounds { index: usize, lower: f64, upper: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("model digest mismatch: file says {recorded}, content hashes to {computed}")]
    DigestMismatch { recorded: String, computed: String },

    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
