use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = TwinError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum TwinError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Document did not match the expected schema.
    #[error("schema error at {field} (line {line}, column {column}): {message}")]
    Schema {
        field: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    #[error("csv error: {0}")]
    Csv(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("airspace {0} contains no voxel centers")]
    EmptyGrid(String),

    #[error("voxel index {index} out of range (grid has {count} voxels)")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("point {point:?} coincides with transmitter of site {site}")]
    Singularity { site: String, point: [f64; 3] },

    #[error("assignment has no angle for cell {cell} sub-beam {beam}")]
    IncompleteAssignment { cell: String, beam: usize },

    #[error("angle (az {azimuth_deg}, tilt {tilt_deg}) is outside the bounds of cell {cell} sub-beam {beam}")]
    OutOfBounds {
        cell: String,
        beam: usize,
        azimuth_deg: f64,
        tilt_deg: f64,
    },

    #[error("unknown cell id {0}")]
    UnknownCell(String),

    #[error("{0}: empty input")]
    EmptySet(&'static str),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("no voxel layer at altitude {0} m")]
    UnknownLayer(f64),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("search space of {size} assignments exceeds the cap of {cap}")]
    SearchSpaceTooLarge { size: u128, cap: u128 },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
}

impl TwinError {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        TwinError::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TwinError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by malformed or inconsistent user input, as
    /// opposed to failures during computation.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            TwinError::Io { .. }
                | TwinError::Schema { .. }
                | TwinError::Validation { .. }
                | TwinError::Csv(_)
                | TwinError::UnknownCell(_)
                | TwinError::IncompleteAssignment { .. }
                | TwinError::OutOfBounds { .. }
                | TwinError::InvalidArgument(_)
                | TwinError::UnknownLayer(_)
        )
    }
}

impl From<csv::Error> for TwinError {
    fn from(err: csv::Error) -> Self {
        TwinError::Csv(err.to_string())
    }
}

/// Converts a `serde_path_to_error` failure into a schema error carrying the
/// offending field path and source position.
pub(crate) fn schema_error(err: serde_path_to_error::Error<serde_json::Error>) -> TwinError {
    let field = err.path().to_string();
    let inner = err.inner();
    TwinError::Schema {
        field,
        line: inner.line(),
        column: inner.column(),
        message: inner.to_string(),
    }
}
