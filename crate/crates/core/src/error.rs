use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A layer cannot accept the shape flowing into it.
    #[error("layer {layer} ({kind}): {message}")]
    Layer { layer: usize, kind: &'static str, message: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("backward requires a trace recorded by forward_traced over the same layers")]
    MissingTrace,
    #[error("non-finite {what} at optimizer step {step}")]
    NonFinite { what: String, step: u64 },
    #[error("training diverged at iteration {iteration} (last finite loss {last_loss})")]
    Diverged { iteration: u64, last_loss: f64 },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("item `{0}` has an empty attribute set")]
    EmptyAttributes(String),
    #[error("unknown {kind} `{id}`")]
    Unknown { kind: &'static str, id: String },
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("{0}")]
    Usage(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn layer(layer: usize, kind: &'static str, message: impl Into<String>) -> Self {
        Error::Layer {
            layer,
            kind,
            message: message.into(),
        }
    }
}
