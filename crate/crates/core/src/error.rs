use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Kepler solver did not converge after {iterations} iterations (e = {eccentricity}, M = {mean_anomaly} rad)")]
    KeplerNonConvergence {
        iterations: usize,
        eccentricity: f64,
        mean_anomaly: f64,
    },

    #[error("no feasible phasing orbit for a phase offset of {phase_deg} deg")]
    NoFeasiblePhasing { phase_deg: f64 },

    #[error("geolocated latitude {lat} deg is at or beyond a pole")]
    PolarSingularity { lat: f64 },

    #[error("extent mismatch: {0}")]
    ExtentMismatch(String),

    #[error("resource lattice has {states} states (cap {cap}); choose a coarser quantum for the data/battery parameters")]
    LatticeTooLarge { states: usize, cap: usize },

    #[error("resource parameters do not share a rational quantum: {0}")]
    NoCommonQuantum(String),

    #[error("brute-force search space of {size} assignments exceeds the cap of {cap}")]
    SearchSpaceTooLarge { size: u128, cap: u128 },

    #[error("executed schedule is invalid before step {t_now}: {details}")]
    InvalidExecutedPrefix { t_now: usize, details: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
