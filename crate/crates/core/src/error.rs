use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty")]
    Empty,

    #[error("series {index} has shape {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    MixedDims {
        index: usize,
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },

    #[error("series {index} contains a non-finite value at ({row}, {col})")]
    NonFinite { index: usize, row: usize, col: usize },

    #[error("series are too short: need m >= 1 and T >= 2, got m = {m}, T = {t}")]
    TooShort { m: usize, t: usize },

    #[error("order p = {p} too large for series of length T = {t} (need p <= T - 2)")]
    OrderTooLarge { p: usize, t: usize },

    #[error("label {label} at position {index} is out of range for k = {k}")]
    LabelOutOfRange { index: usize, label: usize, k: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("log-likelihood matrix has a non-finite entry at row {row}, cluster {cluster}")]
    NonFiniteLoglik { row: usize, cluster: usize },

    #[error("cluster {cluster} is empty")]
    EmptyCluster { cluster: usize },

    #[error("cluster {cluster} is degenerate: {source}")]
    DegenerateCluster {
        cluster: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("pooled Gram matrix is singular{}", context(.series))]
    RankDeficient { series: Option<usize> },

    #[error("noise covariance is singular{}", context(.series))]
    SingularSigma { series: Option<usize> },

    #[error("value {value} is outside the support of the {family} family")]
    OutOfSupport { family: &'static str, value: f64 },

    #[error("maximum-likelihood estimate lies on the parameter-domain boundary (component {component})")]
    BoundaryMle { component: usize },

    #[error("need at least {needed} usable series, found {available}")]
    TooFewSeries { needed: usize, available: usize },

    #[error("model is not stable: spectral radius {radius} >= 1")]
    Unstable { radius: f64 },

    #[error("target SNR {target_db} dB is unachievable (attainable range [{min_db}, {max_db}] dB)")]
    Unachievable {
        target_db: f64,
        min_db: f64,
        max_db: f64,
    },

    #[error("no restart reached the log-likelihood threshold {threshold}")]
    NoQualifyingRun { threshold: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },
}

fn context(series: &Option<usize>) -> String {
    match series {
        Some(n) => format!(" (series {n})"),
        None => String::new(),
    }
}

impl Error {
    /// True for failures caused by degenerate numerics rather than bad input.
    pub fn is_numeric_degeneracy(&self) -> bool {
        matches!(
            self,
            Error::DegenerateCluster { .. }
                | Error::EmptyCluster { .. }
                | Error::RankDeficient { .. }
                | Error::SingularSigma { .. }
                | Error::BoundaryMle { .. }
                | Error::TooFewSeries { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
