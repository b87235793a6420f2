use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, GeomagError>;

#[derive(Debug, Error)]
pub enum GeomagError {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature exactness {available} is below the required {required}")]
    Precision { required: usize, available: usize },

    #[error("numerical singularity: {0}")]
    Singularity(String),

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("open surface: edge ({0}, {1}) is not shared by exactly two triangles")]
    OpenSurface(usize, usize),

    #[error("parse error{}: {message}", location.as_ref().map(|p| format!(" in {}", p.display())).unwrap_or_default())]
    Parse {
        location: Option<PathBuf>,
        message: String,
    },

    /// The resolvent is (numerically) singular because `lambda` sits on the
    /// discrete spectrum of the Neumann-Poincare operator.
    #[error("resonance: shifted operator is singular (nearest eigenvalue {nearest:.6e}, smallest singular value estimate {sigma_min:.3e})")]
    Resonance { nearest: f64, sigma_min: f64 },

    #[error("accuracy error: {0}")]
    Accuracy(String),

    #[error("expansion diverges: |z| = {z_norm} is not below |x| = {x_norm}")]
    DivergenceRegion { z_norm: f64, x_norm: f64 },

    #[error("background field vanishes at {0:?}")]
    DegenerateBackground([f64; 3]),

    #[error("proximity error: {0}")]
    Proximity(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("coverage error: {0}")]
    Coverage(String),

    #[error("recovered weight is zero (the anomaly did not change between epochs)")]
    ZeroWeight,

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("degenerate basis: {0}")]
    DegenerateBasis(String),

    #[error("inconsistent epochs: {0}")]
    InconsistentEpochs(String),

    #[error("value out of attainable range: {0}")]
    OutOfRange(String),

    #[error("anisotropy mismatch: {0}")]
    AnisotropyMismatch(String),

    #[error("optimizer failed to converge after {iterations} iterations (best residual {residual:.3e})")]
    OptimizationFailure { iterations: usize, residual: f64 },

    #[error("format mismatch: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl GeomagError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        GeomagError::Domain(msg.into())
    }

    pub(crate) fn parse(location: Option<PathBuf>, msg: impl Into<String>) -> Self {
        GeomagError::Parse {
            location,
            message: msg.into(),
        }
    }
}
