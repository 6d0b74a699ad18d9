use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("pgm format error: {0}")]
    Format(String),
    #[error("pgm truncated: header declares {expected} pixels, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("value out of range: {0}")]
    Range(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("degenerate image: pixel standard deviation is below 1e-12")]
    DegenerateImage,
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: dimension mismatch, expected {}x{}, found {}x{}", path.display(), expected.0, expected.1, found.0, found.1)]
    ImageSizeMismatch {
        path: PathBuf,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("class directory {} contains no .pgm files", .0.display())]
    EmptyClass(PathBuf),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("{classes} classes exceed the synthetic grid capacity of {capacity}")]
    Capacity { classes: usize, capacity: usize },
    #[error("template {template:?} is larger than test image {test:?}")]
    TemplateTooLarge {
        template: (usize, usize),
        test: (usize, usize),
    },
    #[error("degenerate template: standard deviation is below 1e-12")]
    DegenerateTemplate,
    #[error("insufficient data: got {0} samples")]
    InsufficientData(usize),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("singular covariance (shrunk matrix is not positive definite); increase lambda")]
    SingularCovariance,
    #[error("degenerate variance: shrunk variance of feature {0} is below 1e-12")]
    DegenerateVariance(usize),
    #[error("neutral class {0:?} not present in the dataset")]
    MissingNeutral(String),
    #[error("intensity unavailable: neutral reference median is {0}")]
    IntensityUnavailable(f64),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("invalid label {0:?}: labels must be non-empty and contain no whitespace")]
    InvalidLabel(String),
    #[error("model parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
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
