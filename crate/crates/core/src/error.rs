use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the numeric and pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("least-squares system is rank deficient (condition estimate {condition:.3e} exceeds bound {bound:.3e})")]
    RankDeficient { condition: f64, bound: f64 },

    #[error("system is underdetermined: {rows} samples for {cols} unknowns")]
    Underdetermined { rows: usize, cols: usize },

    #[error("series did not converge after {terms} terms ({what})")]
    NonConvergence { what: String, terms: usize },

    #[error("no boundary root found for m={m}, family {family}, after scanning degrees [{lo}, {hi}]")]
    RootNotFound { m: usize, family: String, lo: f64, hi: f64 },

    #[error("direction (theta={theta:.6} rad, phi={phi:.6} rad) lies outside the cap of half-angle {half_angle:.6} rad")]
    OutsideCap { theta: f64, phi: f64, half_angle: f64 },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("mesh topology error: {0}")]
    Topology(String),

    #[error("spherical parameterization did not converge (final gradient norm {gradient:.3e} after {iterations} sweeps)")]
    ParamNonConvergence { gradient: f64, iterations: usize },

    #[error("spherical map has {count} flipped triangles")]
    FlippedTriangles { count: usize },

    #[error("cap crop around the requested center is empty")]
    EmptyCrop,

    #[error("grid direction (theta={theta:.6}, phi={phi:.6}) is not covered by any cropped triangle")]
    UncoveredPoint { theta: f64, phi: f64 },

    #[error("missing measurement: {0}")]
    MissingMeasurement(String),

    #[error("frequency {freq:.1} Hz exceeds the Nyquist limit {nyquist:.1} Hz")]
    FrequencyOutOfRange { freq: f64, nyquist: f64 },

    #[error("no onset found for direction {direction}, ear {ear}")]
    NoOnset { direction: usize, ear: String },

    #[error("non-finite gradient in parameter tensor {tensor}")]
    NonFiniteGradient { tensor: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
