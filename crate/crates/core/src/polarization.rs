//! Polarization tensors of one anomaly, from boundary-integral solves on a
//! reference mesh or in closed form for the unit ball.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::layerpot::{NPOperator, PanelDensity, ShiftSign, TriMesh};
use crate::{CMat3, GeomagError, Result};

/// Default reference frequency; small in units where `eps` and `sigma` are O(1).
pub const DEFAULT_OMEGA: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnomalyMaterial {
    pub mu: f64,
    pub eps: f64,
    #[serde(default)]
    pub sigma: f64,
}

/// Background constants and the per-anomaly material table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Materials {
    pub mu0: f64,
    pub eps0: f64,
    pub eps_shell: f64,
    #[serde(default = "default_omega")]
    pub omega: f64,
    pub anomalies: Vec<AnomalyMaterial>,
}

fn default_omega() -> f64 {
    DEFAULT_OMEGA
}

impl Materials {
    pub fn single(mu0: f64, eps0: f64, eps_shell: f64, anomaly: AnomalyMaterial) -> Self {
        Materials {
            mu0,
            eps0,
            eps_shell,
            omega: DEFAULT_OMEGA,
            anomalies: vec![anomaly],
        }
    }

    pub fn anomaly(&self, l: usize) -> Result<&AnomalyMaterial> {
        self.anomalies
            .get(l)
            .ok_or_else(|| GeomagError::domain(format!("no material entry for anomaly {l}")))
    }

    /// `gamma_l = eps_l + i sigma_l / omega`.
    pub fn gamma(&self, l: usize) -> Result<Complex64> {
        let a = self.anomaly(l)?;
        let im = if a.sigma == 0.0 { 0.0 } else { a.sigma / self.omega };
        Ok(Complex64::new(a.eps, im))
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(GeomagError::domain(format!("{name} must be positive and finite, got {v}")))
            }
        };
        pos(self.mu0, "mu0")?;
        pos(self.eps0, "eps0")?;
        pos(self.eps_shell, "eps_shell")?;
        pos(self.omega, "omega")?;
        if self.eps_shell == self.eps0 {
            return Err(GeomagError::domain(
                "eps_shell == eps0 makes lambda_eps infinite; use eps_shell = eps0 * (1 + 1e-8)",
            ));
        }
        for (l, a) in self.anomalies.iter().enumerate() {
            pos(a.mu, &format!("mu[{l}]"))?;
            pos(a.eps, &format!("eps[{l}]"))?;
            if !(a.sigma >= 0.0) {
                return Err(GeomagError::domain(format!("sigma[{l}] must be non-negative")));
            }
            if a.mu == self.mu0 {
                return Err(GeomagError::domain(format!("mu[{l}] equals mu0 (no magnetic contrast)")));
            }
        }
        Ok(())
    }
}

/// Which form of `lambda_eps` to use. `Printed` is the degenerate constant
/// 1/2 and exists only as a negative control.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum LambdaEpsForm {
    #[default]
    Corrected,
    Printed,
}

/// Sign inside the `gamma` resolvent of the `D` tensor: `Plus` gives
/// `(lambda_gamma I + K*)^{-1}`, `Minus` gives `(lambda_gamma I - K*)^{-1}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DSign {
    #[default]
    Plus,
    Minus,
}

impl DSign {
    fn shift(self) -> ShiftSign {
        match self {
            DSign::Plus => ShiftSign::Plus,
            DSign::Minus => ShiftSign::Minus,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorOptions {
    pub d_sign: DSign,
    pub lambda_eps: LambdaEpsForm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaParams {
    pub gamma: Complex64,
    pub mu: f64,
    pub eps: f64,
}

pub fn lambda_params(materials: &Materials, l: usize) -> Result<LambdaParams> {
    lambda_params_with(materials, l, LambdaEpsForm::Corrected)
}

pub fn lambda_params_with(materials: &Materials, l: usize, form: LambdaEpsForm) -> Result<LambdaParams> {
    let a = materials.anomaly(l)?;
    let g = materials.gamma(l)?;
    let (mu0, eps0, es) = (materials.mu0, materials.eps0, materials.eps_shell);
    if a.mu == mu0 {
        return Err(GeomagError::domain("lambda_mu: mu_l - mu0 vanishes"));
    }
    if es == eps0 {
        return Err(GeomagError::domain("lambda_eps: eps_shell - eps0 vanishes"));
    }
    if g == Complex64::new(es, 0.0) {
        return Err(GeomagError::domain("lambda_gamma: gamma_l - eps_shell vanishes"));
    }
    let eps = match form {
        LambdaEpsForm::Corrected => (es + eps0) / (2.0 * (es - eps0)),
        LambdaEpsForm::Printed => (es - eps0) / (2.0 * (es - eps0)),
    };
    Ok(LambdaParams {
        gamma: (g + es) / ((g - es) * 2.0),
        mu: (a.mu + mu0) / (2.0 * (a.mu - mu0)),
        eps,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarizationSet {
    pub p0: CMat3,
    pub d: CMat3,
    pub m: CMat3,
    pub p: CMat3,
}

impl PolarizationSet {
    fn assemble(p0: CMat3, d: CMat3, m: CMat3, mu0: f64, eps0: f64) -> Self {
        let p = m * Complex64::from(mu0) - d * Complex64::from(eps0) - p0;
        PolarizationSet { p0, d, m, p }
    }

    /// Tensors of the shape scaled by `s`: everything scales like volume.
    pub fn scaled(&self, s: f64) -> Self {
        let k = Complex64::from(s * s * s);
        PolarizationSet {
            p0: self.p0 * k,
            d: self.d * k,
            m: self.m * k,
            p: self.p * k,
        }
    }

    pub fn max_relative_error(&self, reference: &PolarizationSet) -> f64 {
        [
            (self.p0, reference.p0),
            (self.d, reference.d),
            (self.m, reference.m),
            (self.p, reference.p),
        ]
        .iter()
        .filter(|(_, r)| r.norm() > 0.0)
        .map(|(a, r)| (a - r).norm() / r.norm())
        .fold(0.0, f64::max)
    }
}

fn moment(mesh: &TriMesh, psi: &PanelDensity) -> nalgebra::Vector3<Complex64> {
    let mut acc = nalgebra::Vector3::<Complex64>::zeros();
    for ((c, a), v) in mesh.centroids().iter().zip(mesh.areas()).zip(psi.iter()) {
        acc += c.map(|x| Complex64::new(x * a, 0.0)) * *v;
    }
    acc
}

fn normal_component(mesh: &TriMesh, k: usize) -> PanelDensity {
    DVector::from_iterator(mesh.len(), mesh.normals().iter().map(|n| Complex64::new(n[k], 0.0)))
}

/// Shared first solve `(lambda_eps I - K*)^{-1}[nu_k]`, reusable across
/// permeabilities.
pub struct EpsSolution<'a> {
    op: &'a NPOperator,
    psi: [PanelDensity; 3],
    eps_factor: Complex64,
    p0: CMat3,
}

impl<'a> EpsSolution<'a> {
    pub fn new(op: &'a NPOperator, materials: &Materials, form: LambdaEpsForm) -> Result<Self> {
        let (es, eps0) = (materials.eps_shell, materials.eps0);
        if es == eps0 {
            return Err(GeomagError::domain("eps_shell == eps0 makes lambda_eps infinite"));
        }
        let lambda_eps = match form {
            LambdaEpsForm::Corrected => (es + eps0) / (2.0 * (es - eps0)),
            LambdaEpsForm::Printed => 0.5,
        };
        let solver = op.shifted(Complex64::from(lambda_eps), ShiftSign::Minus)?;
        let mesh = op.mesh();
        let psi = [
            solver.solve(&normal_component(mesh, 0))?,
            solver.solve(&normal_component(mesh, 1))?,
            solver.solve(&normal_component(mesh, 2))?,
        ];
        let mut p0 = CMat3::zeros();
        for (k, p) in psi.iter().enumerate() {
            p0.set_column(k, &moment(mesh, p));
        }
        Ok(EpsSolution {
            op,
            psi,
            eps_factor: Complex64::from(es / (es - eps0)),
            p0,
        })
    }

    pub fn p0(&self) -> CMat3 {
        self.p0
    }

    /// `factor * int y (shift I + sign K*)^{-1} psi_k`, or its regular limit
    /// `1/limit_scale * int y psi_k` when the contrast vanishes.
    fn second_solve(&self, shift: Option<Complex64>, sign: ShiftSign, factor: Complex64) -> Result<CMat3> {
        let mesh = self.op.mesh();
        let mut t = CMat3::zeros();
        match shift {
            Some(lambda) => {
                let solver = self.op.shifted(lambda, sign)?;
                for (k, p) in self.psi.iter().enumerate() {
                    t.set_column(k, &(moment(mesh, &solver.solve(p)?) * factor));
                }
            }
            None => {
                for (k, p) in self.psi.iter().enumerate() {
                    t.set_column(k, &(moment(mesh, p) * factor));
                }
            }
        }
        Ok(t * self.eps_factor)
    }

    /// `M` for permeability `mu`; regular at `mu = mu0`.
    pub fn m_tensor(&self, mu: f64, mu0: f64) -> Result<CMat3> {
        if mu == mu0 {
            return self.second_solve(None, ShiftSign::Minus, Complex64::from(2.0 / (mu + mu0)));
        }
        let lambda = (mu + mu0) / (2.0 * (mu - mu0));
        self.second_solve(Some(Complex64::from(lambda)), ShiftSign::Minus, Complex64::from(1.0 / (mu - mu0)))
    }

    /// `D` for complex permittivity `gamma`; regular at `gamma = eps_shell`.
    pub fn d_tensor(&self, gamma: Complex64, eps_shell: f64, sign: DSign) -> Result<CMat3> {
        let diff = gamma - eps_shell;
        if diff.norm() == 0.0 {
            return self.second_solve(None, sign.shift(), Complex64::from(2.0) / (gamma + eps_shell));
        }
        let lambda = (gamma + eps_shell) / (diff * 2.0);
        self.second_solve(Some(lambda), sign.shift(), Complex64::from(1.0) / diff)
    }
}

/// Boundary-integral polarization tensors of anomaly `l` on the reference
/// shape of `op`.
pub fn compute_tensors(op: &NPOperator, materials: &Materials, l: usize, opts: &TensorOptions) -> Result<PolarizationSet> {
    lambda_params_with(materials, l, opts.lambda_eps)?;
    let a = materials.anomaly(l)?;
    let eps = EpsSolution::new(op, materials, opts.lambda_eps)?;
    let d = eps.d_tensor(materials.gamma(l)?, materials.eps_shell, opts.d_sign)?;
    let m = eps.m_tensor(a.mu, materials.mu0)?;
    Ok(PolarizationSet::assemble(eps.p0(), d, m, materials.mu0, materials.eps0))
}

/// Closed-form tensors of the unit ball from the degree-1 eigenvalue 1/6.
pub fn analytic_ball_tensors(materials: &Materials, l: usize, opts: &TensorOptions) -> Result<PolarizationSet> {
    let lp = lambda_params_with(materials, l, opts.lambda_eps)?;
    let a = materials.anomaly(l)?;
    let g = materials.gamma(l)?;
    let (mu0, eps0, es) = (materials.mu0, materials.eps0, materials.eps_shell);
    let vol = 4.0 * PI / 3.0;
    let eps_res = 1.0 / (lp.eps - 1.0 / 6.0);
    let eps_factor = es / (es - eps0);
    let p0 = vol * eps_res;
    // (mu - mu0)^{-1} / (lambda_mu - 1/6) written without the removable singularity.
    let m = eps_factor * vol * eps_res * 3.0 / (a.mu + 2.0 * mu0);
    let d_den = match opts.d_sign {
        DSign::Plus => g * 2.0 + es,
        DSign::Minus => g + 2.0 * es,
    };
    let d = Complex64::from(eps_factor * vol * eps_res * 3.0) / d_den;
    let eye = CMat3::identity();
    Ok(PolarizationSet::assemble(
        eye * Complex64::from(p0),
        eye * d,
        eye * Complex64::from(m),
        mu0,
        eps0,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonsingularDiagnostic {
    pub condition_value: Complex64,
    pub nonsingular: bool,
}

/// The ball nonsingularity condition
/// `mu eps_s^2 + 2 (mu0 - mu) eps_s gamma + 2 (mu + 2 mu0) eps0 gamma != mu0 eps_s^2`.
pub fn check_nonsingular_gamma(mu: f64, mu0: f64, eps_shell: f64, eps0: f64, gamma: Complex64) -> NonsingularDiagnostic {
    let es2 = eps_shell * eps_shell;
    let value = Complex64::from(mu * es2) + gamma * (2.0 * (mu0 - mu) * eps_shell)
        + gamma * (2.0 * (mu + 2.0 * mu0) * eps0)
        - mu0 * es2;
    let scale = mu0 * es2;
    NonsingularDiagnostic {
        condition_value: value,
        nonsingular: value.norm() > 1e-10 * scale,
    }
}

pub fn check_nonsingular(materials: &Materials, l: usize) -> Result<NonsingularDiagnostic> {
    let a = materials.anomaly(l)?;
    Ok(check_nonsingular_gamma(
        a.mu,
        materials.mu0,
        materials.eps_shell,
        materials.eps0,
        materials.gamma(l)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layerpot::assemble_k_star;

    fn mats(mu: f64, eps: f64, sigma: f64, eps_shell: f64) -> Materials {
        Materials::single(1.0, 1.0, eps_shell, AnomalyMaterial { mu, eps, sigma })
    }

    #[test]
    fn lambda_examples() {
        let lp = lambda_params(&mats(2.0, 3.0, 0.0, 2.0), 0).unwrap();
        assert!((lp.mu - 1.5).abs() < 1e-15);
        assert!((lp.eps - 1.5).abs() < 1e-15);
        let mut m = mats(2.0, 1.0, 1.0, 1.0 + 1e-8);
        m.omega = 1e-6;
        let lp = lambda_params(&m, 0).unwrap();
        assert!((lp.gamma - 0.5).norm() < 1e-5);
        assert!(lambda_params(&mats(1.0, 3.0, 0.0, 2.0), 0).is_err());
        assert!(lambda_params(&mats(2.0, 3.0, 0.0, 1.0), 0).is_err());
        assert!(lambda_params(&mats(2.0, 2.0, 0.0, 2.0), 0).is_err());
    }

    #[test]
    fn ball_closed_forms() {
        let t = analytic_ball_tensors(&mats(2.0, 3.0, 0.0, 2.0), 0, &TensorOptions::default()).unwrap();
        assert!((t.p0[(0, 0)].re - PI).abs() < 1e-14);
        let limit = mats(2.0, 1.0, 1.0, 1.0 + 1e-12);
        let t = analytic_ball_tensors(&limit, 0, &TensorOptions::default()).unwrap();
        assert!((t.m[(1, 1)].re - PI).abs() < 1e-9);
        assert!(t.d.norm() < 1e-5 * t.m.norm());
        let near = analytic_ball_tensors(&mats(1.0 + 1e-12, 3.0, 0.0, 2.0), 0, &TensorOptions::default()).unwrap();
        let e = 3.0 * 2.0 / 4.0;
        assert!((near.m[(0, 0)].re - 4.0 * PI / 3.0 * e).abs() < 1e-9);
    }

    #[test]
    fn p_identity_is_exact() {
        let t = analytic_ball_tensors(&mats(3.0, 2.0, 0.5, 1.5), 0, &TensorOptions::default()).unwrap();
        assert_eq!(t.p, t.m * Complex64::from(1.0) - t.d - t.p0);
    }

    #[test]
    fn bem_matches_ball_at_low_resolution() {
        // Limited by the volume deficit of the inscribed polyhedron (about 3% here).
        let op = assemble_k_star(&TriMesh::icosphere(2).unwrap()).unwrap();
        for d_sign in [DSign::Plus, DSign::Minus] {
            let opts = TensorOptions { d_sign, ..Default::default() };
            let m = mats(5.0, 3.0, 0.0, 2.0);
            let bem = compute_tensors(&op, &m, 0, &opts).unwrap();
            let exact = analytic_ball_tensors(&m, 0, &opts).unwrap();
            assert!(bem.max_relative_error(&exact) < 0.045, "{:?}", bem.max_relative_error(&exact));
        }
    }

    #[test]
    fn printed_lambda_eps_breaks_the_ball_oracle() {
        let op = assemble_k_star(&TriMesh::icosphere(1).unwrap()).unwrap();
        let m = mats(5.0, 3.0, 0.0, 2.0);
        let good = analytic_ball_tensors(&m, 0, &TensorOptions::default()).unwrap();
        let opts = TensorOptions { lambda_eps: LambdaEpsForm::Printed, ..Default::default() };
        // The printed value 1/2 sits on the equilibrium eigenvalue of K*.
        match compute_tensors(&op, &m, 0, &opts) {
            Err(GeomagError::Resonance { .. }) => {}
            Ok(bad) => assert!(bad.max_relative_error(&good) > 0.5),
            Err(other) => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn nonsingular_examples() {
        let d = check_nonsingular(&mats(1.0, 2.0, 0.0, 3.0), 0).unwrap();
        assert!((d.condition_value - Complex64::from(6.0 * 2.0)).norm() < 1e-12);
        assert!(d.nonsingular);
        let mut m = mats(2.0, 1.0, 1.0, 1.0);
        m.omega = 1e-9;
        let d = check_nonsingular(&m, 0).unwrap();
        assert!(d.nonsingular && d.condition_value.norm() > 1e8);
        let (mu, mu0, es, e0) = (3.0, 1.0, 1.0, 1.0);
        let root = (mu0 - mu) * es * es / (2.0 * (mu0 - mu) * es + 2.0 * (mu + 2.0 * mu0) * e0);
        let d = check_nonsingular_gamma(mu, mu0, es, e0, Complex64::from(root));
        assert!(!d.nonsingular);
    }

    #[test]
    fn materials_validation() {
        assert!(mats(2.0, 1.0, 0.0, 2.0).validate().is_ok());
        assert!(mats(1.0, 1.0, 0.0, 2.0).validate().is_err());
        assert!(mats(2.0, 1.0, 0.0, 1.0).validate().is_err());
        assert!(mats(2.0, -1.0, 0.0, 2.0).validate().is_err());
    }
}
