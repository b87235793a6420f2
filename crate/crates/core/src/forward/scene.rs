use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::PathBuf;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::kernel::{hessian_gamma0, kernel_multipole_hessian, real_to_complex};
use crate::layerpot::{assemble_k_star, TriMesh};
use crate::polarization::{analytic_ball_tensors, compute_tensors, Materials, PolarizationSet, TensorOptions};
use crate::{CVec3, GeomagError, Mat3, Result, Vec3};

/// Leading-order background field `H_0 = grad u_0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackgroundField {
    Uniform {
        h: [f64; 3],
    },
    /// `u_0 = -m . r / (4 pi |r|^3)` with `r = x - source`.
    Dipole {
        source: [f64; 3],
        moment: [f64; 3],
    },
    /// `u_0 = linear . x + x^T Q x` with `Q` symmetric and trace free.
    Polynomial {
        linear: [f64; 3],
        #[serde(default)]
        quadratic: [[f64; 3]; 3],
    },
}

impl BackgroundField {
    pub fn uniform(h: [f64; 3]) -> Self {
        BackgroundField::Uniform { h }
    }

    fn quadratic_matrix(q: &[[f64; 3]; 3]) -> Mat3 {
        Mat3::from_fn(|i, j| q[i][j])
    }

    /// Checks finiteness and, for polynomials, harmonicity.
    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            BackgroundField::Uniform { h } if !finite(h) => Err(GeomagError::domain("uniform field must be finite")),
            BackgroundField::Dipole { source, moment } if !finite(source) || !finite(moment) => {
                Err(GeomagError::domain("dipole source and moment must be finite"))
            }
            BackgroundField::Polynomial { linear, quadratic } => {
                let q = Self::quadratic_matrix(quadratic);
                if !finite(linear) || !finite(q.as_slice()) {
                    return Err(GeomagError::domain("polynomial coefficients must be finite"));
                }
                let scale = q.norm().max(f64::MIN_POSITIVE);
                if (q - q.transpose()).norm() > 1e-12 * scale {
                    return Err(GeomagError::domain("quadratic coefficient matrix must be symmetric"));
                }
                if q.trace().abs() > 1e-12 * scale {
                    return Err(GeomagError::domain(format!(
                        "quadratic part is not harmonic (trace {:.3e})",
                        q.trace()
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &Vec3) -> Result<Vec3> {
        match self {
            BackgroundField::Uniform { h } => Ok(Vec3::from(*h)),
            BackgroundField::Dipole { source, moment } => {
                let r = x - Vec3::from(*source);
                let d = r.norm();
                if !(d > 0.0) {
                    return Err(GeomagError::Singularity("background dipole evaluated at its source".into()));
                }
                let u = r / d;
                let m = Vec3::from(*moment);
                Ok((u * (3.0 * u.dot(&m)) - m) / (4.0 * PI * d * d * d))
            }
            BackgroundField::Polynomial { linear, quadratic } => {
                Ok(Vec3::from(*linear) + Self::quadratic_matrix(quadratic) * x * 2.0)
            }
        }
    }

    /// Magnitude the field would have at `x` with no cancellation, used to
    /// judge whether a value is numerically zero.
    pub(crate) fn scale_at(&self, x: &Vec3) -> f64 {
        match self {
            BackgroundField::Uniform { h } => Vec3::from(*h).norm(),
            BackgroundField::Dipole { source, moment } => {
                let d = (x - Vec3::from(*source)).norm();
                3.0 * Vec3::from(*moment).norm() / (4.0 * PI * d * d * d)
            }
            BackgroundField::Polynomial { linear, quadratic } => {
                Vec3::from(*linear).norm() + 2.0 * Self::quadratic_matrix(quadratic).norm() * x.norm()
            }
        }
    }

    pub(crate) fn vanishes_at(&self, x: &Vec3) -> Result<bool> {
        let h = self.eval(x)?.norm();
        Ok(h == 0.0 || h <= 1e-12 * self.scale_at(x))
    }
}

pub fn eval_background(field: &BackgroundField, x: &Vec3) -> Result<Vec3> {
    field.eval(x)
}

/// Reference shape `Omega` of an anomaly, centered at the origin with size of order one.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// Unit ball, tensors in closed form.
    #[default]
    Ball,
    /// Unit ball discretized as an icosphere, tensors by boundary integrals.
    Icosphere(usize),
    /// Closed triangulated surface in OFF format.
    Mesh(PathBuf),
}

impl Shape {
    pub fn mesh(&self) -> Result<Option<TriMesh>> {
        match self {
            Shape::Ball => Ok(None),
            Shape::Icosphere(r) => TriMesh::icosphere(*r).map(Some),
            Shape::Mesh(p) => TriMesh::load_off(p).map(Some),
        }
    }

    /// Radius of the smallest origin-centered ball containing the shape.
    pub fn reference_radius(&self) -> Result<f64> {
        Ok(match self.mesh()? {
            None => 1.0,
            Some(m) => m.vertices().iter().map(|v| v.norm()).fold(0.0, f64::max),
        })
    }
}

/// `D_l = s_l delta Omega + z_l` with `s_l = delta^alpha` at the later epoch
/// and `s_l = 1` at epoch 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anomaly {
    pub center: [f64; 3],
    #[serde(default)]
    pub shape: Shape,
    pub delta: f64,
    pub alpha: f64,
    /// Index into the materials table.
    pub material: usize,
}

impl Anomaly {
    pub fn z(&self) -> Vec3 {
        Vec3::from(self.center)
    }

    /// `delta^{3 alpha} - 1`.
    pub fn variation_factor(&self) -> f64 {
        self.delta.powf(3.0 * self.alpha) - 1.0
    }

    /// Larger of the two epoch sizes, `max(1, s) delta`, times the reference radius.
    pub fn support_radius(&self, reference_radius: f64) -> f64 {
        self.delta.powf(self.alpha).max(1.0) * self.delta * reference_radius
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub anomalies: Vec<Anomaly>,
    pub materials: Materials,
    pub background: BackgroundField,
    /// Radius of the measurement sphere.
    pub radius: f64,
}

impl Scene {
    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).unwrap_or_default();
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn max_center_norm(&self) -> f64 {
        self.anomalies.iter().map(|a| a.z().norm()).fold(0.0, f64::max)
    }

    pub(crate) fn check_basic(&self) -> Result<()> {
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(GeomagError::Geometry(format!("measurement radius {} must be positive", self.radius)));
        }
        for (i, a) in self.anomalies.iter().enumerate() {
            if !(a.delta > 0.0) || !a.delta.is_finite() || !a.alpha.is_finite() || !a.center.iter().all(|c| c.is_finite()) {
                return Err(GeomagError::domain(format!("anomaly {i}: delta must be positive and all values finite")));
            }
            self.materials.anomaly(a.material)?;
        }
        Ok(())
    }
}

/// Per-anomaly dipole data: `v = P H_0(z)` and `w = (delta^{3 alpha} - 1) v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DipoleWeight {
    pub center: [f64; 3],
    pub v: CVec3,
    pub w: CVec3,
    /// Scaled support radius used by proximity checks.
    pub support_radius: f64,
}

/// Reference-shape tensors of every anomaly. Boundary-integral operators are
/// assembled once per distinct shape.
pub fn scene_tensors(scene: &Scene, opts: &TensorOptions) -> Result<Vec<PolarizationSet>> {
    scene.check_basic()?;
    let mut ops = HashMap::new();
    let mut out = Vec::with_capacity(scene.anomalies.len());
    for a in &scene.anomalies {
        let t = match &a.shape {
            Shape::Ball => analytic_ball_tensors(&scene.materials, a.material, opts)?,
            shape => {
                if !ops.contains_key(shape) {
                    let mesh = shape.mesh()?.expect("mesh-backed shape");
                    ops.insert(shape.clone(), assemble_k_star(&mesh)?);
                }
                compute_tensors(&ops[shape], &scene.materials, a.material, opts)?
            }
        };
        out.push(t);
    }
    Ok(out)
}

pub fn dipole_weights(scene: &Scene, tensors: &[PolarizationSet]) -> Result<Vec<DipoleWeight>> {
    scene.check_basic()?;
    if tensors.len() != scene.anomalies.len() {
        return Err(GeomagError::domain(format!(
            "{} tensor sets for {} anomalies",
            tensors.len(),
            scene.anomalies.len()
        )));
    }
    let mut radii = HashMap::new();
    scene
        .anomalies
        .iter()
        .zip(tensors)
        .map(|(a, t)| {
            let z = a.z();
            if scene.background.vanishes_at(&z)? {
                return Err(GeomagError::DegenerateBackground(a.center));
            }
            let h0 = scene.background.eval(&z)?.map(|c| Complex64::new(c, 0.0));
            let v = t.p * h0;
            let rho = match radii.get(&a.shape) {
                Some(r) => *r,
                None => {
                    let r = a.shape.reference_radius()?;
                    radii.insert(a.shape.clone(), r);
                    r
                }
            };
            Ok(DipoleWeight {
                center: a.center,
                v,
                w: v * Complex64::from(a.variation_factor()),
                support_radius: a.support_radius(rho),
            })
        })
        .collect()
}

/// How the dipole kernel is evaluated when synthesizing fields.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelMethod {
    #[default]
    Direct,
    /// Truncated exterior expansion to the given degree.
    Multipole(usize),
}

pub(crate) fn dipole_sum(
    scene: &Scene,
    weights: &[DipoleWeight],
    x: &Vec3,
    method: KernelMethod,
    pick: impl Fn(&DipoleWeight) -> CVec3,
) -> Result<CVec3> {
    if weights.len() != scene.anomalies.len() {
        return Err(GeomagError::domain("weights do not match the scene"));
    }
    let mut acc = CVec3::zeros();
    for (a, wt) in scene.anomalies.iter().zip(weights) {
        let z = a.z();
        let d = (x - z).norm();
        if d < 10.0 * wt.support_radius {
            return Err(GeomagError::Proximity(format!(
                "point at distance {d:.3e} from center {:?}, below 10 x support radius {:.3e}",
                a.center, wt.support_radius
            )));
        }
        let h = match method {
            KernelMethod::Direct => real_to_complex(&hessian_gamma0(&(x - z))?),
            KernelMethod::Multipole(n) => kernel_multipole_hessian(x, &z, n)?,
        };
        let d3 = Complex64::from(a.delta.powi(3));
        acc += h * pick(wt) * d3;
    }
    Ok(acc)
}

/// Leading term of `H_s - H` at epoch 0: `delta^3 sum_l grad grad Gamma_0(x - z_l) w_l`.
pub fn secular_variation(scene: &Scene, weights: &[DipoleWeight], x: &Vec3) -> Result<CVec3> {
    dipole_sum(scene, weights, x, KernelMethod::Direct, |w| w.w)
}

/// Leading term of `H - H_0` at epoch 0: `delta^3 sum_l grad grad Gamma_0(x - z_l) v_l`.
pub fn epoch_perturbation(scene: &Scene, weights: &[DipoleWeight], x: &Vec3) -> Result<CVec3> {
    dipole_sum(scene, weights, x, KernelMethod::Direct, |w| w.v)
}

pub fn secular_variation_with(scene: &Scene, weights: &[DipoleWeight], x: &Vec3, method: KernelMethod) -> Result<CVec3> {
    dipole_sum(scene, weights, x, method, |w| w.w)
}

pub fn epoch_perturbation_with(scene: &Scene, weights: &[DipoleWeight], x: &Vec3, method: KernelMethod) -> Result<CVec3> {
    dipole_sum(scene, weights, x, method, |w| w.v)
}
