use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WavefieldError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("incompatible grids: {0}")]
    IncompatibleGrid(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CghError {
    #[error(transparent)]
    Wavefield(#[from] WavefieldError),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("incompatible grids: {0}")]
    IncompatibleGrid(String),
    #[error("optimizer diverged at iteration {iteration} (loss = {loss})")]
    Divergence { iteration: usize, loss: f64 },
    #[error("amplitude {amplitude} at pixel ({row}, {col}) exceeds a_max = {a_max}")]
    AmplitudeOverflow {
        row: usize,
        col: usize,
        amplitude: f64,
        a_max: f64,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KogelnikError {
    #[error("`{name}` is not a unit vector (|v| = {norm})")]
    InvalidDirection { name: &'static str, norm: f64 },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("k-vector closure impossible: discriminant {discriminant:e} < 0")]
    OffShell { discriminant: f64 },
    #[error("grazing or backward diffraction: c_R = {c_r}, c_S = {c_s}")]
    Grazing { c_r: f64, c_s: f64 },
    #[error("diffraction efficiency {eta} outside [0, 1]")]
    NumericalInconsistency { eta: f64 },
    #[error("invalid angle: cos(theta) = {cos_theta} <= 0")]
    InvalidAngle { cos_theta: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RaytraceError {
    #[error("invalid direction `{name}` (|v| = {norm})")]
    InvalidDirection { name: &'static str, norm: f64 },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error(transparent)]
    Kogelnik(#[from] KogelnikError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("baseline total intensity is zero")]
    DegenerateBaseline,
    #[error("invalid sweep range: {0}")]
    InvalidRange(String),
    #[error(transparent)]
    Raytrace(#[from] RaytraceError),
}

#[derive(Debug, Error)]
pub enum HbgfError {
    #[error("bad magic {0:?}, expected \"HBGF\"")]
    BadMagic([u8; 4]),
    #[error("unsupported {field} value {value}")]
    Unsupported { field: &'static str, value: u32 },
    #[error("payload length mismatch: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("grid has {found} channels, expected {expected}")]
    ChannelMismatch { expected: u32, found: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: parse error at line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("key `{key}` lacks a unit suffix")]
    MissingUnit { key: String },
}

/// Top-level error used by the command runner. Each physics module gets its
/// own exit-code family.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Wavefield(#[from] WavefieldError),
    #[error(transparent)]
    Cgh(#[from] CghError),
    #[error(transparent)]
    Kogelnik(#[from] KogelnikError),
    #[error(transparent)]
    Raytrace(#[from] RaytraceError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Hbgf {
        path: PathBuf,
        #[source]
        source: HbgfError,
    },
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Wavefield(_) => 10,
            Error::Cgh(_) => 11,
            Error::Kogelnik(_) => 12,
            Error::Raytrace(_) => 13,
            Error::Sweep(_) => 14,
            Error::Io { .. } | Error::Hbgf { .. } | Error::Image { .. } => 20,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
