//! Leading-order forward model and constructive inversion for secular
//! variation of the geomagnetic field caused by small magnetic anomalies
//! that grow or shrink between two epochs.
//!
//! The crate is organized bottom-up:
//!
//! * [`sphharm`]: spherical harmonics, vector harmonics, quadrature and coupling tables.
//! * [`layerpot`]: triangulated surfaces and the Neumann-Poincare operator.
//! * [`polarization`]: polarization tensors of an anomaly, numerically and for the ball.
//! * [`forward`]: scenes, dipole weights and synthetic measurements.
//! * [`inverse`]: multipole moments and recovery of centers, exponents and permeabilities.

pub mod error;
pub mod forward;
pub mod inverse;
pub mod layerpot;
pub mod polarization;
pub mod sphharm;

pub use error::{GeomagError, Result};

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type CVec3 = Vector3<Complex64>;
pub type CMat3 = Matrix3<Complex64>;
