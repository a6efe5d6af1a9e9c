use thiserror::Error;

#[derive(Debug, Error)]
pub enum GapError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value: {0}")]
    Numeric(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("timed out: {0}")]
    Timeout(String),
    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<GapError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl GapError {
    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            already @ GapError::AtStep { .. } => already,
            other => GapError::AtStep {
                step,
                source: Box::new(other),
            },
        }
    }

    /// Innermost error, skipping step annotations.
    pub fn root(&self) -> &GapError {
        match self {
            GapError::AtStep { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, GapError>;

/// Wraps an I/O error with the path it concerns.
pub(crate) fn io_at(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> GapError + '_ {
    move |e| {
        GapError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    }
}
