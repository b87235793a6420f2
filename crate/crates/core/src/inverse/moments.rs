use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::forward::VectorFieldSamples;
use crate::sphharm::{lm_index, table_len, Derivs, ProjectionMatrices, SolidHarmonics, SphericalTable};
use crate::{CMat3, CVec3, GeomagError, Result, Vec3};

fn check_coverage(samples: &VectorFieldSamples) -> Result<()> {
    samples.validate()?;
    let total = samples.quad.total_weight();
    if samples.is_empty() || (total - 4.0 * PI).abs() > 1e-10 * 4.0 * PI {
        return Err(GeomagError::Coverage(format!(
            "quadrature weights sum to {total}, not 4 pi: samples must cover the full sphere"
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProjectionKind {
    /// `N_2^{m'}`, built from `Y_1^{m'}`.
    N2,
    /// `Q_0^{m'}`, built from `Y_1^{m'}`.
    Q0,
}

/// `int conj(basis^{m'}) . H(R x) ds` for `m' = -1, 0, 1`, stored at index `m' + 1`.
pub fn project_vector_harmonic(samples: &VectorFieldSamples, kind: ProjectionKind) -> Result<CVec3> {
    check_coverage(samples)?;
    samples.quad.require(6)?;
    let mut out = CVec3::zeros();
    for (node, h) in samples.quad.nodes().iter().zip(&samples.values) {
        let t = SphericalTable::new(&node.dir, 1, Derivs::Gradient);
        for mp in -1i64..=1 {
            let b = match kind {
                ProjectionKind::N2 => t.n_vec(1, mp),
                ProjectionKind::Q0 => t.q_vec(1, mp),
            };
            out[(mp + 1) as usize] += b.map(|c| c.conj()).dot(h) * node.weight;
        }
    }
    Ok(out)
}

/// Aggregate weight `F = sum_l w_l` recovered from the degree-one projections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateF {
    /// From the `N_2` projections.
    pub f: CVec3,
    /// From the `Q_0` projections, when that matrix is invertible.
    pub f_q: Option<CVec3>,
    /// `|f - f_q| / |f|` when both routes exist.
    pub disagreement: Option<f64>,
    pub warnings: Vec<String>,
}

/// `F = 2 sqrt(pi) R^3 / delta^3 C^{-1} (N_2 projections)`, and the same with
/// `D` and the `Q_0` projections as a cross-check.
///
/// `C` and `D` are projections of `A_0^0`; the factor `2 sqrt(pi)` undoes
/// `conj(Y_0^0) = 1 / (2 sqrt(pi))` in the degree-zero kernel term.
pub fn recover_aggregate_f(samples: &VectorFieldSamples, proj: &ProjectionMatrices, delta: f64) -> Result<AggregateF> {
    if !(delta > 0.0) {
        return Err(GeomagError::domain("delta must be positive"));
    }
    let r = samples.radius();
    let k = Complex64::from(2.0 * PI.sqrt() * r.powi(3) / delta.powi(3));
    let f = proj.c_inverse()? * project_vector_harmonic(samples, ProjectionKind::N2)? * k;
    let mut warnings = Vec::new();
    let (f_q, disagreement) = match proj.d_inverse() {
        Some(dinv) => {
            let fq = dinv * project_vector_harmonic(samples, ProjectionKind::Q0)? * k;
            let dis = (f - fq).norm() / f.norm().max(f64::MIN_POSITIVE);
            (Some(fq), Some(dis))
        }
        None => {
            warnings.push("Q_0 projection matrix is singular; the Q route gives no cross-check".to_string());
            (None, None)
        }
    };
    Ok(AggregateF {
        f,
        f_q,
        disagreement,
        warnings,
    })
}

/// Exterior multipole coefficients of the scalar potential:
/// `H = -sum c[n][m] N^m_{n+1}(x) / R^{n+2}`, i.e. `H = grad u` with
/// `u = sum c[n][m] Y_n^m(x) / r^{n+1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub nmax: usize,
    pub radius: f64,
    /// Degree-major, `lm_index(n, m)`, from `n = 0`.
    pub c: Vec<Complex64>,
    /// `R^3` times the RMS of the samples; the natural size of a degree-one moment.
    pub scale: f64,
    /// Vector moments `sum_l conj(h_n^m(z_l)) W_l`, filled from a fitted dipole model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Vec<CVec3>>,
}

impl MomentTable {
    pub fn get(&self, n: usize, m: i64) -> Complex64 {
        self.c[lm_index(n, m)]
    }

    /// Fills `d[n][m] = sum_l conj(h_n^m(z_l)) W_l` from centers and scaled weights `W_l = delta^3 w_l`.
    pub fn with_vector_moments(mut self, centers: &[Vec3], weights: &[CVec3]) -> Self {
        let mut d = vec![CVec3::zeros(); table_len(self.nmax)];
        for (z, w) in centers.iter().zip(weights) {
            let h = SolidHarmonics::evaluate(z, self.nmax, Derivs::Value);
            for n in 0..=self.nmax {
                for m in -(n as i64)..=(n as i64) {
                    d[lm_index(n, m)] += w * h.value(n, m).conj();
                }
            }
        }
        self.d = Some(d);
        self
    }

    /// Field of the truncated expansion at `x`, `|x| > 0`.
    pub fn eval(&self, x: &Vec3) -> Result<CVec3> {
        let r = x.norm();
        let dir = crate::sphharm::SphDir::new(*x)?;
        let t = SphericalTable::new(&dir, self.nmax, Derivs::Gradient);
        let mut acc = CVec3::zeros();
        let mut rp = r * r;
        for n in 0..=self.nmax {
            for m in -(n as i64)..=(n as i64) {
                acc -= t.n_vec(n, m) * (self.get(n, m) / rp);
            }
            rp *= r;
        }
        Ok(acc)
    }
}

pub fn extract_moments(samples: &VectorFieldSamples, nmax: usize) -> Result<MomentTable> {
    check_coverage(samples)?;
    samples.quad.require(2 * (nmax + 1))?;
    let r = samples.radius();
    let mut c = vec![Complex64::new(0.0, 0.0); table_len(nmax)];
    for (node, h) in samples.quad.nodes().iter().zip(&samples.values) {
        let t = SphericalTable::new(&node.dir, nmax, Derivs::Gradient);
        for n in 0..=nmax {
            for m in -(n as i64)..=(n as i64) {
                c[lm_index(n, m)] += t.n_vec(n, m).map(|v| v.conj()).dot(h) * node.weight;
            }
        }
    }
    for n in 0..=nmax {
        let k = -r.powi(n as i32 + 2) / ((n + 1) * (2 * n + 1)) as f64;
        for m in -(n as i64)..=(n as i64) {
            c[lm_index(n, m)] *= k;
        }
    }
    Ok(MomentTable {
        nmax,
        radius: r,
        c,
        scale: r.powi(3) * samples.rms(),
        d: None,
    })
}

/// Constant gradients `conj(grad h_1^m)`, as rows `m + 1`.
pub(crate) fn degree_one_rows() -> CMat3 {
    let h = SolidHarmonics::evaluate(&Vec3::zeros(), 1, Derivs::Gradient);
    let mut g = CMat3::zeros();
    for m in -1i64..=1 {
        g.set_row((m + 1) as usize, &h.gradient(1, m).map(|c| c.conj()).transpose());
    }
    g
}

/// Scaled weight `W = delta^3 sum_l w_l` from the degree-one moments.
pub(crate) fn scaled_weight_from_degree_one(moments: &MomentTable) -> Result<CVec3> {
    let c1 = CVec3::new(moments.get(1, -1), moments.get(1, 0), moments.get(1, 1)) * Complex64::from(3.0);
    let g = degree_one_rows();
    let inv = g
        .try_inverse()
        .ok_or_else(|| GeomagError::DegenerateBasis("degree-one gradient matrix is singular".into()))?;
    Ok(inv * c1)
}

/// Center and weight of a single anomaly from the degree-one and degree-two moments.
///
/// The degree-one moments give `W = delta^3 w` directly. The degree-two ones
/// are `c[2][m] = (conj(H_m) W) . z / 5` with the constant Hessians `H_m` of
/// `h_2^m`, which is linear in `z` and solved in least squares.
pub fn locate_single(moments: &MomentTable, delta: f64) -> Result<(Vec3, CVec3)> {
    if moments.nmax < 2 {
        return Err(GeomagError::domain("locating an anomaly needs moments up to degree 2"));
    }
    if !(delta > 0.0) {
        return Err(GeomagError::domain("delta must be positive"));
    }
    let w = scaled_weight_from_degree_one(moments)?;
    if w.norm() == 0.0 || w.norm() <= 1e-12 * moments.scale {
        return Err(GeomagError::ZeroWeight);
    }
    let h = SolidHarmonics::evaluate(&Vec3::zeros(), 2, Derivs::Hessian);
    let mut a = DMatrix::<f64>::zeros(10, 3);
    let mut b = DVector::<f64>::zeros(10);
    for m in -2i64..=2 {
        let row: CVec3 = h.hessian(2, m).map(|c| c.conj()) * w;
        let rhs = moments.get(2, m) * 5.0;
        let i = (m + 2) as usize;
        for k in 0..3 {
            a[(2 * i, k)] = row[k].re;
            a[(2 * i + 1, k)] = row[k].im;
        }
        b[2 * i] = rhs.re;
        b[2 * i + 1] = rhs.im;
    }
    let svd = a.svd(true, true);
    let (hi, lo) = (svd.singular_values.max(), svd.singular_values.min());
    if !(lo > 1e-10 * hi) {
        return Err(GeomagError::DegenerateGeometry(format!(
            "degree-two location system is rank deficient (singular values {hi:.3e} .. {lo:.3e})"
        )));
    }
    let z = svd
        .solve(&b, 0.0)
        .map_err(|e| GeomagError::DegenerateGeometry(e.to_string()))?;
    Ok((Vec3::new(z[0], z[1], z[2]), w / Complex64::from(delta.powi(3))))
}

/// Field `sum_l grad grad Gamma_0(x - z_l) W_l` of point dipoles with scaled weights.
pub fn dipole_model_field(centers: &[Vec3], scaled_weights: &[CVec3], x: &Vec3) -> Result<CVec3> {
    let mut acc = CVec3::zeros();
    for (z, w) in centers.iter().zip(scaled_weights) {
        let h = crate::forward::hessian_gamma0(&(x - z))?;
        acc += h.map(Complex64::from) * w;
    }
    Ok(acc)
}

