use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    Dimension {
        expected: usize,
        actual: usize,
        context: &'static str,
    },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite gradient in parameter `{name}` at entry {index}: {value}")]
    NonFiniteGradient {
        name: String,
        index: usize,
        value: f64,
    },
    #[error("region {0} lies outside the image")]
    RegionOutOfBounds(String),
    #[error("no landmark region fits inside the image")]
    NoRegions,
    #[error("missing feature for sample `{sample}` region {region}")]
    MissingFeature { sample: String, region: usize },
    #[error("feature dimension inconsistency at line {line}: expected {expected}, got {actual}")]
    FeatureDimension {
        line: usize,
        expected: usize,
        actual: usize,
    },
    #[error("duplicate feature key `{sample}`/{region} at line {line}")]
    DuplicateFeature {
        sample: String,
        region: usize,
        line: usize,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("records without pose angles: {0:?}")]
    MissingAngles(Vec<String>),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
