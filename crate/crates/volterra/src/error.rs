//! Crate-wide error type and process exit-code mapping.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // Data errors (exit code 1).
    #[error("series too short: need at least {required} rows, got {actual}")]
    SeriesTooShort { required: usize, actual: usize },

    #[error("non-finite value at row {row}, channel {channel}")]
    NonFinite { row: usize, channel: usize },

    #[error("channel count mismatch: {left} vs {right}")]
    ChannelMismatch { left: usize, right: usize },

    #[error("window width mismatch: {left} vs {right} (static kernels flatten equal-width windows)")]
    WidthMismatch { left: usize, right: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("input exceeds bound M: row {row} has norm {norm}, bound {bound}")]
    InputExceedsBound { row: usize, norm: f64, bound: f64 },

    #[error("MAPE undefined at zero target (index {index})")]
    ZeroTarget { index: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("ingestion error in {path}: {detail}")]
    Ingestion { path: PathBuf, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    // Configuration errors (exit code 2).
    #[error("tensorization out of range: tau^2 * M^2 = {product} must be < 1")]
    TensorizationOutOfRange { product: f64 },

    #[error("no echo state property for these parameters: lambda = {lambda} not in (0, {limit})")]
    NoEchoState { lambda: f64, limit: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("ridge regularization must be positive, got {0}")]
    InvalidRidge(f64),

    #[error("streaming mode requires nested truncations")]
    NotNested,

    #[error("kernel parameters do not match the Gram matrix")]
    ParamsMismatch,

    #[error("Gram matrix is not symmetric")]
    NotSymmetric,

    #[error("prediction requires a Gram extension")]
    MissingExtension,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("empty feasible grid")]
    EmptyFeasibleGrid,

    // Numerical failures (exit code 3).
    #[error("Gram numerically degenerate")]
    GramDegenerate,

    // Pipeline stage tagging.
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps an error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code: 0 success, 1 data error, 2 config error, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::SeriesTooShort { .. }
            | Error::NonFinite { .. }
            | Error::ChannelMismatch { .. }
            | Error::WidthMismatch { .. }
            | Error::LengthMismatch { .. }
            | Error::InputExceedsBound { .. }
            | Error::ZeroTarget { .. }
            | Error::DegenerateData(_)
            | Error::Ingestion { .. }
            | Error::Io { .. } => 1,
            Error::TensorizationOutOfRange { .. }
            | Error::NoEchoState { .. }
            | Error::InvalidParameter(_)
            | Error::InvalidRidge(_)
            | Error::NotNested
            | Error::ParamsMismatch
            | Error::NotSymmetric
            | Error::MissingExtension
            | Error::Config(_)
            | Error::EmptyFeasibleGrid => 2,
            Error::GramDegenerate => 3,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_family() {
        assert_eq!(
            Error::SeriesTooShort {
                required: 5,
                actual: 2
            }
            .exit_code(),
            1
        );
        assert_eq!(Error::Config("bad".into()).exit_code(), 2);
        assert_eq!(Error::GramDegenerate.exit_code(), 3);
    }

    #[test]
    fn stage_wrapping_preserves_exit_code_and_names_stage() {
        let err = Error::ZeroTarget { index: 3 }.in_stage("evaluate");
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("evaluate"));
    }
}
