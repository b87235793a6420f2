use num_complex::Complex64;

use crate::layerpot::NPOperator;
use crate::polarization::{EpsSolution, LambdaEpsForm, Materials, TensorOptions};
use crate::{CMat3, CVec3, GeomagError, Result, Vec3};

/// Angle tolerance for `w || v` and `v || H_0`.
pub const PARALLEL_TOL: f64 = 1e-6;

/// `rho = w . conj(v) / |v|^2` together with the angle between `w` and `v`.
pub fn weight_ratio(w: &CVec3, v: &CVec3) -> Result<(Complex64, f64)> {
    let vv = v.norm_squared();
    if !(vv > 0.0) {
        return Err(GeomagError::domain("epoch-0 weight v vanishes"));
    }
    let rho = w.dotc(v).conj() / vv;
    let resid = (w - v * rho).norm();
    let angle = if w.norm() == 0.0 { 0.0 } else { (resid / w.norm()).min(1.0).asin() };
    Ok((rho, angle))
}

/// `alpha = ln(1 + rho) / (3 ln delta)` from `w = (delta^{3 alpha} - 1) v`.
pub fn recover_alpha(w: &CVec3, v: &CVec3, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(GeomagError::domain(format!("delta = {delta} must lie in (0, 1)")));
    }
    let (rho, angle) = weight_ratio(w, v)?;
    if angle > PARALLEL_TOL || rho.im.abs() > PARALLEL_TOL * rho.norm().max(1.0) {
        return Err(GeomagError::InconsistentEpochs(format!(
            "w is not a real multiple of v (angle {angle:.3e} rad, ratio {rho})"
        )));
    }
    alpha_from_ratio(rho.re, delta)
}

pub(crate) fn alpha_from_ratio(rho: f64, delta: f64) -> Result<f64> {
    if !(1.0 + rho > 0.0) {
        return Err(GeomagError::domain(format!(
            "1 + rho = {} must be positive (delta^(3 alpha) > 0)",
            1.0 + rho
        )));
    }
    Ok((1.0 + rho).ln() / (3.0 * delta.ln()))
}

/// Reference shape used when solving for the permeability.
#[derive(Clone, Copy)]
pub enum MuShape<'a> {
    Ball,
    Mesh(&'a NPOperator),
}

const MU_BRACKET: (f64, f64) = (1e-3, 1e3);
const MU_TOL: f64 = 1e-10;

/// Permeability of anomaly `l` from its epoch-0 weight `v = P H_0(z)`.
///
/// Only `mu0`, the permittivities and the conductivity of `materials` are
/// used; its `mu` entries are ignored.
pub fn recover_mu(v: &CVec3, h0: &Vec3, materials: &Materials, l: usize, shape: MuShape<'_>) -> Result<f64> {
    let hh = h0.norm_squared();
    if !(hh > 0.0) {
        return Err(GeomagError::DegenerateBackground([h0[0], h0[1], h0[2]]));
    }
    let hc = h0.map(Complex64::from);
    let p = v.dot(&hc) / hh;
    match shape {
        MuShape::Ball => {
            let resid = (v - hc * p).norm();
            if resid > PARALLEL_TOL * v.norm() {
                return Err(GeomagError::AnisotropyMismatch(format!(
                    "v is not parallel to H_0(z) (relative residual {:.3e}); a ball has isotropic tensors",
                    resid / v.norm()
                )));
            }
            ball_mu(p, materials, l)
        }
        MuShape::Mesh(op) => mesh_mu(p, h0, materials, l, op),
    }
}

/// Ball tensors: `p(mu) = mu0 K / (mu + 2 mu0) - eps0 d - p0`, where only the
/// first term depends on `mu`. Inverted in closed form.
fn ball_mu(p: Complex64, materials: &Materials, l: usize) -> Result<f64> {
    let opts = TensorOptions::default();
    let mu0 = materials.mu0;
    // The tensors at mu = 2 mu0 give K and the mu-independent offset.
    let mut probe = materials.clone();
    let a = probe
        .anomalies
        .get_mut(l)
        .ok_or_else(|| GeomagError::domain(format!("no material entry for anomaly {l}")))?;
    a.mu = 2.0 * mu0;
    let t = crate::polarization::analytic_ball_tensors(&probe, l, &opts)?;
    let m_at = t.m[(0, 0)].re;
    // m(mu) = K / (mu + 2 mu0).
    let k = m_at * 4.0 * mu0;
    let offset = -(t.d[(0, 0)] * materials.eps0) - t.p0[(0, 0)];
    let q = p - offset;
    let (lo, hi) = (0.0, k / 2.0);
    // mu0 m(mu) runs over (0, K / 2) as mu runs over (inf, 0).
    if q.im.abs() > 1e-8 * q.norm().max(f64::MIN_POSITIVE) {
        return Err(GeomagError::OutOfRange(format!(
            "p = {p} leaves a complex magnetic part {q}; no real permeability matches"
        )));
    }
    let q = q.re;
    if !(q > lo && q < hi) {
        return Err(GeomagError::OutOfRange(format!(
            "mu0 M part {q:.6e} outside the attainable range ({lo}, {hi:.6e}) for mu in (0, inf)"
        )));
    }
    let mu = mu0 * k / q - 2.0 * mu0;
    if (mu - mu0).abs() <= 1e-9 * mu0 {
        return Err(GeomagError::OutOfRange("p sits at the zero-contrast limit mu = mu0".into()));
    }
    Ok(mu)
}

fn directional(t: &CMat3, h: &Vec3) -> Complex64 {
    let hc = h.map(Complex64::from);
    hc.dot(&(t * hc)) / h.norm_squared()
}

/// Root of `Re p(mu) = Re p` with tensors from boundary integrals, bisection then secant.
fn mesh_mu(p: Complex64, h0: &Vec3, materials: &Materials, l: usize, op: &NPOperator) -> Result<f64> {
    let opts = TensorOptions::default();
    let mu0 = materials.mu0;
    let eps = EpsSolution::new(op, materials, LambdaEpsForm::Corrected)?;
    let d = eps.d_tensor(materials.gamma(l)?, materials.eps_shell, opts.d_sign)?;
    let fixed = directional(&(d * Complex64::from(materials.eps0) + eps.p0()), h0);
    let f = |mu: f64| -> Result<f64> {
        let m = eps.m_tensor(mu, mu0)?;
        Ok((directional(&m, h0) * mu0 - fixed - p).re)
    };
    let (mut a, mut b) = (MU_BRACKET.0 * mu0, MU_BRACKET.1 * mu0);
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(GeomagError::OutOfRange(format!(
            "p = {p} is not attained for mu in [{a:.1e}, {b:.1e}] (residuals {fa:.3e}, {fb:.3e})"
        )));
    }
    // Bisection in log(mu) until the bracket is narrow, then secant steps kept inside it.
    while b / a > 1.01 {
        let m = (a * b).sqrt();
        let fm = f(m)?;
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
            fb = fm;
        }
    }
    // Illinois variant of regula falsi: halve the stale end value when one side repeats.
    let mut side = 0i8;
    for _ in 0..200 {
        let mut x = b - fb * (b - a) / (fb - fa);
        if !(x > a && x < b) {
            x = 0.5 * (a + b);
        }
        let fx = f(x)?;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = x;
            fb = fx;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
        if b - a <= MU_TOL * x {
            return Ok(0.5 * (a + b));
        }
    }
    Ok(0.5 * (a + b))
}

/// `p(mu)` for the ball, the scalar the closed-form inversion solves against.
pub fn ball_p_of_mu(mu: f64, materials: &Materials, l: usize) -> Result<Complex64> {
    let mut m = materials.clone();
    m.anomalies
        .get_mut(l)
        .ok_or_else(|| GeomagError::domain(format!("no material entry for anomaly {l}")))?
        .mu = mu;
    Ok(crate::polarization::analytic_ball_tensors(&m, l, &TensorOptions::default())?.p[(0, 0)])
}
