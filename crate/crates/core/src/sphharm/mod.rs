//! Scalar and vector spherical harmonics on the unit sphere.
//!
//! Normalization is orthonormal with the Condon-Shortley phase:
//! `Y_n^{-m} = (-1)^m conj(Y_n^m)` and `int |Y_n^m|^2 ds = 1`.
//!
//! Surface gradients are taken from the Cartesian gradient of the solid
//! harmonic `|x|^n Y_n^m`, so every quantity here is regular at the poles.
//! The angular formula is kept as [`eval_grad_s_ynm_angular`] for
//! cross-checking away from the poles.

mod coupling;
mod quadrature;
mod solid;

pub use coupling::{
    coupling_ab, coupling_c, coupling_cd, coupling_d, projected_cd, projection_matrices, CouplingTables,
    ProjectionMatrices,
};
pub use quadrature::{gauss_legendre, level_for_exactness, sphere_quadrature, QuadNode, QuadRule};
pub use solid::{lm_index, table_len, Derivs, SolidHarmonics};

use nalgebra::Vector3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{CMat3, CVec3, GeomagError, Result};

/// A direction on the unit sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct SphDir(Vector3<f64>);

impl SphDir {
    /// Normalizes `v`; fails on the zero vector.
    pub fn new(v: Vector3<f64>) -> Result<Self> {
        let r = v.norm();
        if !(r > 0.0) || !r.is_finite() {
            return Err(GeomagError::domain("direction must be a finite nonzero vector"));
        }
        // Leave unit input untouched so stored directions round-trip bit for bit.
        if (r - 1.0).abs() <= 4.0 * f64::EPSILON {
            Ok(SphDir(v))
        } else {
            Ok(SphDir(v / r))
        }
    }

    pub fn from_angles(theta: f64, phi: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        SphDir(Vector3::new(st * cp, st * sp, ct))
    }

    pub fn north() -> Self {
        SphDir(Vector3::z())
    }

    pub fn vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn theta(&self) -> f64 {
        self.0[2].clamp(-1.0, 1.0).acos()
    }

    /// Azimuth in `[0, 2 pi)`.
    pub fn phi(&self) -> f64 {
        let p = self.0[1].atan2(self.0[0]);
        if p < 0.0 {
            p + 2.0 * std::f64::consts::PI
        } else {
            p
        }
    }

    /// Unit vector `e_theta`. Undefined (NaN-free but arbitrary) at the poles.
    pub fn e_theta(&self) -> Vector3<f64> {
        let (t, p) = (self.theta(), self.phi());
        Vector3::new(t.cos() * p.cos(), t.cos() * p.sin(), -t.sin())
    }

    pub fn e_phi(&self) -> Vector3<f64> {
        let p = self.phi();
        Vector3::new(-p.sin(), p.cos(), 0.0)
    }
}

impl TryFrom<[f64; 3]> for SphDir {
    type Error = GeomagError;
    fn try_from(v: [f64; 3]) -> Result<Self> {
        SphDir::new(Vector3::from(v))
    }
}

impl From<SphDir> for [f64; 3] {
    fn from(d: SphDir) -> Self {
        d.0.into()
    }
}

fn check_degree(n: usize, m: i64) -> Result<()> {
    if m.unsigned_abs() as usize > n {
        Err(GeomagError::domain(format!("order m={m} exceeds degree n={n}")))
    } else {
        Ok(())
    }
}

pub(crate) fn complexify(v: &Vector3<f64>) -> CVec3 {
    v.map(|c| Complex64::new(c, 0.0))
}

#[cfg(test)]
pub(crate) fn complexify_mat(m: &nalgebra::Matrix3<f64>) -> CMat3 {
    m.map(|c| Complex64::new(c, 0.0))
}

/// Which vector spherical harmonic to evaluate from the degree-`n` scalar one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VectorHarmonicKind {
    /// `N^m_{n+1} = (n+1) Y x - grad_s Y`, radial part of exterior gradients.
    N,
    /// `Q^m_{n-1} = grad_s Y + n Y x`, gradients of interior solid harmonics.
    Q,
    /// `T^m_n = grad_s Y x x`, purely tangential and divergence free.
    T,
}

/// All harmonics up to `nmax` at one direction, with whatever derivatives
/// were requested.
#[derive(Clone, Debug)]
pub struct SphericalTable {
    dir: SphDir,
    solid: SolidHarmonics,
}

impl SphericalTable {
    pub fn new(dir: &SphDir, nmax: usize, derivs: Derivs) -> Self {
        SphericalTable {
            dir: *dir,
            solid: SolidHarmonics::evaluate(dir.vector(), nmax, derivs),
        }
    }

    pub fn nmax(&self) -> usize {
        self.solid.nmax()
    }

    pub fn dir(&self) -> &SphDir {
        &self.dir
    }

    pub fn y(&self, n: usize, m: i64) -> Complex64 {
        self.solid.value(n, m)
    }

    pub fn grad_s(&self, n: usize, m: i64) -> CVec3 {
        let x = complexify(self.dir.vector());
        self.solid.gradient(n, m) - x * (self.solid.value(n, m) * n as f64)
    }

    /// `N^m_{n+1}` built from `Y_n^m`.
    pub fn n_vec(&self, n: usize, m: i64) -> CVec3 {
        let x = complexify(self.dir.vector());
        x * (self.solid.value(n, m) * (2 * n + 1) as f64) - self.solid.gradient(n, m)
    }

    /// `Q^m_{n-1}` built from `Y_n^m`; this is just the gradient of the solid harmonic.
    pub fn q_vec(&self, n: usize, m: i64) -> CVec3 {
        *self.solid.gradient(n, m)
    }

    pub fn t_vec(&self, n: usize, m: i64) -> CVec3 {
        self.grad_s(n, m).cross(&complexify(self.dir.vector()))
    }

    /// The matrix `A_n^m(x)` appearing in the Hessian expansion of the
    /// Laplace kernel, assembled term by term from `Y`, `grad_s Y` and the
    /// surface Jacobian of `grad_s Y`. Needs a Hessian table.
    pub fn a_matrix(&self, n: usize, m: i64) -> CMat3 {
        let nf = n as f64;
        let xr = self.dir.vector();
        let x = complexify(xr);
        let y = self.solid.value(n, m);
        let g = *self.solid.gradient(n, m);
        let h = *self.solid.hessian(n, m);
        let gs = g - x * (y * nf);
        let eye = CMat3::identity();
        let xxt = x * x.transpose();

        // J_ij = d_i (grad_s Y)_j for the degree-0 extension of grad_s Y off the sphere.
        let jac = x * g.transpose() * Complex64::from(1.0 - nf) + h + xxt * (y * nf * (nf + 1.0))
            - g * x.transpose() * Complex64::from(nf)
            - eye * (y * nf);
        // The surface-Hessian term acts as the derivative of grad_s Y along the
        // tangential part of xi; the literal reading P J xi breaks symmetry for n >= 1.
        let surf = jac.transpose() * (eye - xxt);

        x * gs.transpose() * Complex64::from(nf + 1.0) + eye * (y * (nf + 1.0))
            - xxt * (y * ((nf + 1.0) * (nf + 3.0)))
            - surf
            + gs * x.transpose() * Complex64::from(nf + 2.0)
    }
}

pub fn eval_ynm(n: usize, m: i64, dir: &SphDir) -> Result<Complex64> {
    check_degree(n, m)?;
    Ok(SolidHarmonics::evaluate(dir.vector(), n, Derivs::Value).value(n, m))
}

pub fn eval_grad_s_ynm(n: usize, m: i64, dir: &SphDir) -> Result<CVec3> {
    check_degree(n, m)?;
    Ok(SphericalTable::new(dir, n, Derivs::Gradient).grad_s(n, m))
}

/// Surface gradient from `dY/dtheta e_theta + (1/sin theta) dY/dphi e_phi`.
///
/// Fails within `1e-8` of a pole, where the frame is undefined.
pub fn eval_grad_s_ynm_angular(n: usize, m: i64, dir: &SphDir) -> Result<CVec3> {
    check_degree(n, m)?;
    let theta = dir.theta();
    let st = theta.sin();
    if st < 1e-8 {
        return Err(GeomagError::Singularity(
            "angular surface-gradient formula evaluated at a pole".into(),
        ));
    }
    let phi = dir.phi();
    let t = SolidHarmonics::evaluate(dir.vector(), n, Derivs::Value);
    let y = t.value(n, m);
    let mf = m as f64;
    let mut d_theta = y * (mf * theta.cos() / st);
    if m < n as i64 {
        let raise = ((n as f64 - mf) * (n as f64 + mf + 1.0)).sqrt();
        d_theta += t.value(n, m + 1) * Complex64::from_polar(raise, -phi);
    }
    let d_phi = y * Complex64::new(0.0, mf);
    Ok(complexify(&dir.e_theta()) * d_theta + complexify(&dir.e_phi()) * (d_phi / st))
}

pub fn eval_vector_harmonic(kind: VectorHarmonicKind, n: usize, m: i64, dir: &SphDir) -> Result<CVec3> {
    check_degree(n, m)?;
    if matches!(kind, VectorHarmonicKind::Q | VectorHarmonicKind::T) && n == 0 {
        return Err(GeomagError::domain(format!("{kind:?} harmonics need n >= 1")));
    }
    let t = SphericalTable::new(dir, n, Derivs::Gradient);
    Ok(match kind {
        VectorHarmonicKind::N => t.n_vec(n, m),
        VectorHarmonicKind::Q => t.q_vec(n, m),
        VectorHarmonicKind::T => t.t_vec(n, m),
    })
}

pub fn eval_a(n: usize, m: i64, dir: &SphDir) -> Result<CMat3> {
    check_degree(n, m)?;
    Ok(SphericalTable::new(dir, n, Derivs::Hessian).a_matrix(n, m))
}
