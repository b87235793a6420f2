use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::sphharm::{Derivs, SolidHarmonics, SphDir, SphericalTable};
use crate::{CMat3, CVec3, GeomagError, Mat3, Result, Vec3};

/// Largest `|z| / |x|` accepted by the multipole expansions.
pub const MAX_MULTIPOLE_RATIO: f64 = 0.9;

fn check_nonzero(r: &Vec3) -> Result<f64> {
    let d = r.norm();
    if d > 0.0 && d.is_finite() {
        Ok(d)
    } else {
        Err(GeomagError::Singularity(format!("Laplace kernel evaluated at r = {:?}", r.as_slice())))
    }
}

/// `grad Gamma_0(r) = r / (4 pi |r|^3)`.
pub fn grad_gamma0(r: &Vec3) -> Result<Vec3> {
    let d = check_nonzero(r)?;
    Ok(r / (4.0 * PI * d * d * d))
}

/// `grad grad Gamma_0(r) = (I - 3 r r^T / |r|^2) / (4 pi |r|^3)`.
pub fn hessian_gamma0(r: &Vec3) -> Result<Mat3> {
    let d = check_nonzero(r)?;
    let u = r / d;
    Ok((Mat3::identity() - u * u.transpose() * 3.0) / (4.0 * PI * d * d * d))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelTerm {
    Grad,
    Hessian,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelValue {
    Grad(CVec3),
    Hessian(CMat3),
}

fn setup(x: &Vec3, z: &Vec3) -> Result<(SphDir, f64)> {
    let (rx, rz) = (x.norm(), z.norm());
    if !(rx > 0.0) || rz >= rx || rz > MAX_MULTIPOLE_RATIO * rx {
        return Err(GeomagError::DivergenceRegion { z_norm: rz, x_norm: rx });
    }
    Ok((SphDir::new(*x)?, rx))
}

/// Exterior expansion of `grad Gamma_0(x - z)` in `N_{n+1}^m(x/|x|)`, degrees `0..=nmax`.
pub fn kernel_multipole_grad(x: &Vec3, z: &Vec3, nmax: usize) -> Result<CVec3> {
    let (dir, r) = setup(x, z)?;
    let tab = SphericalTable::new(&dir, nmax, Derivs::Gradient);
    let hz = SolidHarmonics::evaluate(z, nmax, Derivs::Value);
    let mut acc = CVec3::zeros();
    let mut rp = r * r;
    for n in 0..=nmax {
        let k = 1.0 / ((2 * n + 1) as f64 * rp);
        for m in -(n as i64)..=(n as i64) {
            acc += tab.n_vec(n, m) * (hz.value(n, m).conj() * k);
        }
        rp *= r;
    }
    Ok(acc)
}

/// Exterior expansion of `grad grad Gamma_0(x - z)` in `A_n^m(x/|x|)`, degrees `0..=nmax`.
pub fn kernel_multipole_hessian(x: &Vec3, z: &Vec3, nmax: usize) -> Result<CMat3> {
    let (dir, r) = setup(x, z)?;
    let tab = SphericalTable::new(&dir, nmax, Derivs::Hessian);
    let hz = SolidHarmonics::evaluate(z, nmax, Derivs::Value);
    let mut acc = CMat3::zeros();
    let mut rp = r * r * r;
    for n in 0..=nmax {
        let k = 1.0 / ((2 * n + 1) as f64 * rp);
        for m in -(n as i64)..=(n as i64) {
            acc += tab.a_matrix(n, m) * (hz.value(n, m).conj() * k);
        }
        rp *= r;
    }
    Ok(acc)
}

pub fn kernel_multipole(x: &Vec3, z: &Vec3, nmax: usize, which: KernelTerm) -> Result<KernelValue> {
    Ok(match which {
        KernelTerm::Grad => KernelValue::Grad(kernel_multipole_grad(x, z, nmax)?),
        KernelTerm::Hessian => KernelValue::Hessian(kernel_multipole_hessian(x, z, nmax)?),
    })
}

pub(crate) fn real_to_complex(m: &Mat3) -> CMat3 {
    m.map(|v| Complex64::new(v, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
        loop {
            let v = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let n = v.norm();
            if n > 0.1 && n < 1.0 {
                return v / n;
            }
        }
    }

    #[test]
    fn hessian_example_and_trace() {
        let h = hessian_gamma0(&Vector3::new(0.0, 0.0, 2.0)).unwrap();
        let expect = Mat3::from_diagonal(&Vector3::new(1.0, 1.0, -2.0)) / (32.0 * PI);
        assert!((h - expect).norm() < 1e-16);
        let h = hessian_gamma0(&Vector3::new(0.3, -1.2, 0.7)).unwrap();
        assert!(h.trace().abs() < 1e-15);
        assert!(hessian_gamma0(&Vec3::zeros()).is_err());
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let r = Vector3::new(0.4, 0.9, -0.5);
        let h = hessian_gamma0(&r).unwrap();
        let step = 1e-5;
        for k in 0..3 {
            let mut e = Vec3::zeros();
            e[k] = step;
            let col = (grad_gamma0(&(r + e)).unwrap() - grad_gamma0(&(r - e)).unwrap()) / (2.0 * step);
            assert!((col - h.column(k)).norm() < 1e-8);
        }
    }

    #[test]
    fn hessian_rotation_equivariance() {
        let q = Rotation3::from_euler_angles(0.3, -1.1, 2.0).into_inner();
        let r = Vector3::new(1.0, 0.2, -0.4);
        let a = hessian_gamma0(&(q * r)).unwrap();
        let b = q * hessian_gamma0(&r).unwrap() * q.transpose();
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn multipole_at_origin_is_monopole_term() {
        let x = Vector3::new(0.3, 1.5, -2.0);
        let g = kernel_multipole_grad(&x, &Vec3::zeros(), 4).unwrap();
        let direct = grad_gamma0(&x).unwrap();
        assert!((g.map(|c| c.re) - direct).norm() < 1e-15);
    }

    #[test]
    fn multipole_converges_to_direct_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let x = random_unit(&mut rng) * 2.0;
            let z = random_unit(&mut rng) * 0.6;
            let g = kernel_multipole_grad(&x, &z, 25).unwrap();
            let gd = grad_gamma0(&(x - z)).unwrap();
            assert!((g.map(|c| c.re) - gd).norm() < 1e-8 * gd.norm());
            assert!(g.map(|c| c.im).norm() < 1e-12 * gd.norm());
            let h = kernel_multipole_hessian(&x, &z, 25).unwrap();
            let hd = hessian_gamma0(&(x - z)).unwrap();
            assert!((h - real_to_complex(&hd)).norm() < 1e-8 * hd.norm());
        }
    }

    #[test]
    fn multipole_error_decays_with_ratio() {
        let x = Vector3::new(0.0, 0.6, 0.8);
        let z = Vector3::new(0.3, 0.0, 0.0);
        let hd = real_to_complex(&hessian_gamma0(&(x - z)).unwrap());
        let errs: Vec<f64> = (5..=15).map(|n| (kernel_multipole_hessian(&x, &z, n).unwrap() - hd).norm()).collect();
        let ratio = (errs[10] / errs[0]).powf(0.1);
        assert!((ratio - 0.3).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn divergence_region() {
        let x = Vector3::new(1.0, 0.0, 0.0);
        assert!(matches!(
            kernel_multipole(&x, &Vector3::new(0.0, 1.0, 0.0), 3, KernelTerm::Grad),
            Err(GeomagError::DivergenceRegion { .. })
        ));
        assert!(kernel_multipole(&x, &Vector3::new(0.0, 0.95, 0.0), 3, KernelTerm::Hessian).is_err());
    }
}
