use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mesh::{panel_diameter, TriMesh};
use super::{check_density, PanelDensity};
use crate::{GeomagError, Result, Vec3};

/// Far-field distance (in panel diameters) beyond which one centroid node suffices.
const FAR_RATIO: f64 = 4.0;
/// Below this ratio a panel is split into four before integrating.
const NEAR_RATIO: f64 = 1.5;
const MAX_SPLIT_DEPTH: u32 = 7;
const RESONANCE_SIGMA: f64 = 1e-10;

// Degree-5 seven-point rule on the reference triangle (barycentric, weights sum to 1).
const STRANG_FIX: [([f64; 3], f64); 7] = [
    ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
    ([0.059715871789770, 0.470142064105115, 0.470142064105115], 0.132394152788506),
    ([0.470142064105115, 0.059715871789770, 0.470142064105115], 0.132394152788506),
    ([0.470142064105115, 0.470142064105115, 0.059715871789770], 0.132394152788506),
    ([0.797426985353087, 0.101286507323456, 0.101286507323456], 0.125939180544827),
    ([0.101286507323456, 0.797426985353087, 0.101286507323456], 0.125939180544827),
    ([0.101286507323456, 0.101286507323456, 0.797426985353087], 0.125939180544827),
];

#[inline]
fn kernel(x: &Vec3, nu: &Vec3, y: &Vec3) -> f64 {
    let r = x - y;
    let d2 = r.norm_squared();
    nu.dot(&r) / (4.0 * PI * d2 * d2.sqrt())
}

/// `int_panel nu_x . (x - y) / (4 pi |x - y|^3) ds_y`, refined near `x`.
fn panel_integral(x: &Vec3, nu: &Vec3, p: &[Vec3; 3], depth: u32) -> f64 {
    let area = 0.5 * (p[1] - p[0]).cross(&(p[2] - p[0])).norm();
    let c = (p[0] + p[1] + p[2]) / 3.0;
    let ratio = (x - c).norm() / panel_diameter(p);
    if ratio >= FAR_RATIO {
        return area * kernel(x, nu, &c);
    }
    if ratio >= NEAR_RATIO || depth >= MAX_SPLIT_DEPTH {
        return area
            * STRANG_FIX
                .iter()
                .map(|(b, w)| w * kernel(x, nu, &(p[0] * b[0] + p[1] * b[1] + p[2] * b[2])))
                .sum::<f64>();
    }
    let m01 = (p[0] + p[1]) * 0.5;
    let m12 = (p[1] + p[2]) * 0.5;
    let m20 = (p[2] + p[0]) * 0.5;
    [[p[0], m01, m20], [p[1], m12, m01], [p[2], m20, m12], [m01, m12, m20]]
        .iter()
        .map(|q| panel_integral(x, nu, q, depth + 1))
        .sum()
}

/// Sign in the shifted operator `lambda I + sign K*`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShiftSign {
    Plus,
    Minus,
}

impl ShiftSign {
    pub fn value(self) -> f64 {
        match self {
            ShiftSign::Plus => 1.0,
            ShiftSign::Minus => -1.0,
        }
    }
}

/// Collocation matrix of `K*` on a mesh.
///
/// Off-diagonal entries integrate the kernel over the source panel; the
/// diagonal is fixed so that `sum_i area_i K*_{ij} = area_j / 2` for every
/// column, the discrete form of `K[1] = 1/2`.
#[derive(Debug)]
pub struct NPOperator {
    mesh: TriMesh,
    matrix: DMatrix<f64>,
    hessenberg: OnceLock<(DMatrix<f64>, DMatrix<f64>)>,
    eigenvalues: OnceLock<Option<Vec<Complex64>>>,
}

impl Clone for NPOperator {
    fn clone(&self) -> Self {
        NPOperator {
            mesh: self.mesh.clone(),
            matrix: self.matrix.clone(),
            hessenberg: self.hessenberg.clone(),
            eigenvalues: self.eigenvalues.clone(),
        }
    }
}

pub fn assemble_k_star(mesh: &TriMesh) -> Result<NPOperator> {
    let n = mesh.len();
    let cs = mesh.centroids();
    let ns = mesh.normals();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| if i == j { 0.0 } else { panel_integral(&cs[i], &ns[i], &mesh.panel(j), 0) })
                .collect()
        })
        .collect();
    let mut matrix = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let areas = mesh.areas();
    for j in 0..n {
        let off: f64 = (0..n).filter(|&i| i != j).map(|i| areas[i] * matrix[(i, j)]).sum();
        matrix[(j, j)] = (0.5 * areas[j] - off) / areas[j];
    }
    Ok(NPOperator {
        mesh: mesh.clone(),
        matrix,
        hessenberg: OnceLock::new(),
        eigenvalues: OnceLock::new(),
    })
}

impl NPOperator {
    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn apply(&self, density: &PanelDensity) -> Result<PanelDensity> {
        check_density(&self.mesh, density)?;
        Ok(self.matrix.map(|v| Complex64::new(v, 0.0)) * density)
    }

    /// Largest relative violation of `sum_i area_i K*_{ij} = area_j / 2`.
    pub fn gauss_defect(&self) -> f64 {
        let areas = self.mesh.areas();
        (0..self.len())
            .map(|j| {
                let s: f64 = (0..self.len()).map(|i| areas[i] * self.matrix[(i, j)]).sum();
                (s - 0.5 * areas[j]).abs() / areas[j]
            })
            .fold(0.0, f64::max)
    }

    fn hessenberg(&self) -> &(DMatrix<f64>, DMatrix<f64>) {
        self.hessenberg.get_or_init(|| {
            let (q, h) = self.matrix.clone().hessenberg().unpack();
            (q, h)
        })
    }

    /// Eigenvalues, sorted by decreasing real part. Computed once.
    pub fn eigenvalues(&self) -> Result<&[Complex64]> {
        let ev = self.eigenvalues.get_or_init(|| {
            let (_, h) = self.hessenberg();
            // The unbounded Schur iteration can stall on non-normal input; retry with looser tolerances.
            [1e-12, 1e-10, 1e-8].iter().find_map(|&eps| {
                Schur::try_new(h.clone(), eps, 200_000).map(|s| {
                    let mut ev: Vec<Complex64> = s.complex_eigenvalues().iter().copied().collect();
                    ev.sort_by(|a, b| b.re.total_cmp(&a.re));
                    ev
                })
            })
        });
        ev.as_deref()
            .ok_or_else(|| GeomagError::Accuracy("Schur iteration for the K* spectrum did not converge".into()))
    }

    /// Factors `lambda I + sign K*` for repeated solves. Fails with a resonance
    /// error when the shifted operator is numerically singular.
    pub fn shifted(&self, lambda: Complex64, sign: ShiftSign) -> Result<ShiftedSolver<'_>> {
        let (q, h) = self.hessenberg();
        ShiftedSolver::new(q, h, lambda, sign)
    }

    /// Solves `(lambda I + sign K*) psi = rhs`.
    pub fn resolvent_apply(&self, lambda: Complex64, sign: ShiftSign, rhs: &PanelDensity) -> Result<PanelDensity> {
        check_density(&self.mesh, rhs)?;
        self.shifted(lambda, sign)?.solve(rhs)
    }
}

/// LU factors of a shifted upper-Hessenberg matrix. Pivoting only ever swaps
/// neighbouring rows, so factor and solve are both quadratic in the size.
pub struct ShiftedSolver<'a> {
    q: &'a DMatrix<f64>,
    h: &'a DMatrix<f64>,
    shift: Complex64,
    sign: f64,
    upper: DMatrix<Complex64>,
    multipliers: Vec<Complex64>,
    swapped: Vec<bool>,
    sigma_min: f64,
}

impl<'a> ShiftedSolver<'a> {
    fn new(q: &'a DMatrix<f64>, h: &'a DMatrix<f64>, lambda: Complex64, sign: ShiftSign) -> Result<Self> {
        let n = h.nrows();
        let s = sign.value();
        let mut u = DMatrix::from_fn(n, n, |i, j| {
            let v = Complex64::new(s * h[(i, j)], 0.0);
            if i == j {
                v + lambda
            } else {
                v
            }
        });
        let mut multipliers = vec![Complex64::new(0.0, 0.0); n.saturating_sub(1)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for k in 0..n.saturating_sub(1) {
            if u[(k + 1, k)].norm() > u[(k, k)].norm() {
                u.swap_rows(k, k + 1);
                swapped[k] = true;
            }
            let piv = u[(k, k)];
            if piv.norm() == 0.0 {
                continue;
            }
            let l = u[(k + 1, k)] / piv;
            multipliers[k] = l;
            u[(k + 1, k)] = Complex64::new(0.0, 0.0);
            for j in (k + 1)..n {
                let t = u[(k, j)];
                u[(k + 1, j)] -= l * t;
            }
        }
        let mut solver = ShiftedSolver {
            q,
            h,
            shift: lambda,
            sign: s,
            upper: u,
            multipliers,
            swapped,
            sigma_min: 0.0,
        };
        let scale = h.norm().max(lambda.norm()).max(1.0);
        let tiny = (0..n).map(|k| solver.upper[(k, k)].norm()).fold(f64::INFINITY, f64::min);
        if tiny <= f64::EPSILON * 1e-6 * scale {
            return Err(GeomagError::Resonance {
                nearest: -s * lambda.re,
                sigma_min: 0.0,
            });
        }
        let (sigma, nearest) = solver.estimate_sigma_min();
        solver.sigma_min = sigma;
        if sigma < RESONANCE_SIGMA {
            return Err(GeomagError::Resonance {
                nearest,
                sigma_min: sigma,
            });
        }
        Ok(solver)
    }

    /// Smallest singular value estimate from inverse power iteration, and the
    /// Rayleigh quotient of `K*` on the converged vector.
    fn estimate_sigma_min(&self) -> (f64, f64) {
        let n = self.h.nrows();
        let mut y = DVector::from_fn(n, |i, _| Complex64::new(1.0 + (i as f64 * 0.618).sin() * 0.5, 0.0));
        y /= Complex64::new(y.norm(), 0.0);
        let mut growth = 0.0;
        for _ in 0..30 {
            let z = self.solve_hessenberg(&y);
            let g = z.norm();
            if !g.is_finite() || g == 0.0 {
                return (0.0, -self.sign * self.shift.re);
            }
            y = z / Complex64::new(g, 0.0);
            if (g - growth).abs() <= 1e-6 * g {
                growth = g;
                break;
            }
            growth = g;
        }
        let hc = self.h.map(|v| Complex64::new(v, 0.0));
        let rq = y.dotc(&(hc * &y));
        (1.0 / growth, rq.re)
    }

    pub fn sigma_min_estimate(&self) -> f64 {
        self.sigma_min
    }

    fn solve_hessenberg(&self, b: &DVector<Complex64>) -> DVector<Complex64> {
        let n = b.len();
        let mut x = b.clone();
        for k in 0..n.saturating_sub(1) {
            if self.swapped[k] {
                x.swap_rows(k, k + 1);
            }
            let t = x[k];
            x[k + 1] -= self.multipliers[k] * t;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in (i + 1)..n {
                acc -= self.upper[(i, j)] * x[j];
            }
            x[i] = acc / self.upper[(i, i)];
        }
        x
    }

    pub fn solve(&self, rhs: &PanelDensity) -> Result<PanelDensity> {
        let qc = self.q.map(|v| Complex64::new(v, 0.0));
        let b = qc.transpose() * rhs;
        let y = self.solve_hessenberg(&b);
        let hc = self.h.map(|v| Complex64::new(v * self.sign, 0.0));
        let resid = (&hc * &y + &y * self.shift - &b).norm();
        let scale = rhs.norm();
        if resid > 1e-10 * scale.max(f64::MIN_POSITIVE) {
            return Err(GeomagError::Accuracy(format!(
                "resolvent residual {resid:.3e} exceeds 1e-10 of the right-hand side norm {scale:.3e}"
            )));
        }
        Ok(qc * y)
    }
}
