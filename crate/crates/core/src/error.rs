use thiserror::Error;

/// Errors raised anywhere in the engine.
///
/// Variants are grouped so the CLI can map them onto exit codes: usage and
/// data/validation problems on one side, numerical failures on the other.
#[derive(Debug, Error)]
pub enum IrtmError {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix is not positive definite (pivot {pivot} = {value:.3e}, condition estimate {condition:.3e})")]
    NotPositiveDefinite {
        pivot: usize,
        value: f64,
        condition: f64,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("no anchor available for dimension {dimension} ('{name}'): no signed codes")]
    AnchorUnavailable { dimension: usize, name: String },

    #[error("model is under-identified: {0}")]
    Underidentified(String),

    #[error("design error: {0}")]
    Design(String),

    #[error("numerical failure at iteration {iteration} ({context}): {source}")]
    Sampler {
        iteration: usize,
        context: String,
        #[source]
        source: Box<IrtmError>,
    },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl IrtmError {
    /// True for failures that come from the numerics rather than from the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            IrtmError::NotPositiveDefinite { .. } | IrtmError::Sampler { .. }
        )
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        IrtmError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, IrtmError>;
