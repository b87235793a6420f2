use std::fmt;

use geomag_core::GeomagError;

/// Failure classes with their process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Scene or invariant validation failed (exit 2).
    Validation(String),
    /// Numerical or optimizer failure (exit 3).
    Numeric(String),
    /// I/O, parse or format failure (exit 4).
    Input(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Input(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation failed: {m}"),
            CliError::Numeric(m) => write!(f, "numerical failure: {m}"),
            CliError::Input(m) => write!(f, "input error: {m}"),
        }
    }
}

impl From<GeomagError> for CliError {
    fn from(e: GeomagError) -> Self {
        match e {
            GeomagError::Io(_)
            | GeomagError::Json(_)
            | GeomagError::Csv(_)
            | GeomagError::Parse { .. }
            | GeomagError::Format(_)
            | GeomagError::Mesh(_)
            | GeomagError::OpenSurface(..) => CliError::Input(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
