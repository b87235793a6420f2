//! Coupling integrals between scalar harmonics and their surface gradients,
//! and the vector-harmonic projections of the `A` matrices.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{lm_index, table_len, Derivs, QuadRule, SphericalTable};
use crate::{CMat3, CVec3, GeomagError, Result};

fn check_lm(n: usize, m: i64, nmax: usize) -> Result<()> {
    if n > nmax {
        return Err(GeomagError::domain(format!("degree {n} exceeds table cutoff {nmax}")));
    }
    if m.unsigned_abs() as usize > n {
        return Err(GeomagError::domain(format!("order m={m} exceeds degree n={n}")));
    }
    Ok(())
}

/// `a = int conj(Y_{n'}^{m'}) grad_s Y_n^m ds` and `b = int conj(Y_{n'}^{m'}) Y_n^m x ds`.
pub fn coupling_ab(np: usize, mp: i64, n: usize, m: i64, quad: &QuadRule) -> Result<(CVec3, CVec3)> {
    let top = n.max(np);
    check_lm(np, mp, top)?;
    check_lm(n, m, top)?;
    quad.require(n + np + 2)?;
    let mut a = CVec3::zeros();
    let mut b = CVec3::zeros();
    for node in quad.nodes() {
        let t = SphericalTable::new(&node.dir, top, Derivs::Gradient);
        let w = t.y(np, mp).conj() * node.weight;
        a += t.grad_s(n, m) * w;
        b += super::complexify(node.dir.vector()) * (t.y(n, m) * w);
    }
    Ok((a, b))
}

/// Dense tables of `a` and `b` for all degrees up to `nmax`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CouplingTables {
    nmax: usize,
    a: Vec<CVec3>,
    b: Vec<CVec3>,
}

impl CouplingTables {
    pub const DEFAULT_NMAX: usize = 8;

    pub fn build(nmax: usize, quad: &QuadRule) -> Result<Self> {
        quad.require(2 * nmax + 2)?;
        let len = table_len(nmax);
        let mut a = vec![CVec3::zeros(); len * len];
        let mut b = vec![CVec3::zeros(); len * len];
        for node in quad.nodes() {
            let t = SphericalTable::new(&node.dir, nmax, Derivs::Gradient);
            let x = super::complexify(node.dir.vector());
            let ys: Vec<Complex64> = (0..=nmax)
                .flat_map(|n| (-(n as i64)..=n as i64).map(move |m| (n, m)))
                .map(|(n, m)| t.y(n, m))
                .collect();
            let gs: Vec<CVec3> = (0..=nmax)
                .flat_map(|n| (-(n as i64)..=n as i64).map(move |m| (n, m)))
                .map(|(n, m)| t.grad_s(n, m))
                .collect();
            for (p, yp) in ys.iter().enumerate() {
                let wp = yp.conj() * node.weight;
                let row = p * len;
                for q in 0..len {
                    a[row + q] += gs[q] * wp;
                    b[row + q] += x * (ys[q] * wp);
                }
            }
        }
        Ok(CouplingTables { nmax, a, b })
    }

    pub fn nmax(&self) -> usize {
        self.nmax
    }

    fn slot(&self, np: usize, mp: i64, n: usize, m: i64) -> Result<usize> {
        check_lm(np, mp, self.nmax)?;
        check_lm(n, m, self.nmax)?;
        Ok(lm_index(np, mp) * table_len(self.nmax) + lm_index(n, m))
    }

    pub fn a(&self, np: usize, mp: i64, n: usize, m: i64) -> Result<CVec3> {
        Ok(self.a[self.slot(np, mp, n, m)?])
    }

    pub fn b(&self, np: usize, mp: i64, n: usize, m: i64) -> Result<CVec3> {
        Ok(self.b[self.slot(np, mp, n, m)?])
    }

    /// The printed closed form of the `N_2` projection matrix for the degree-0
    /// term, row `m' + 1` equal to `-4 a_{1,0}^{m',0} + conj(a_{0,1}^{0,m'})`.
    /// Kept for comparison with [`projection_matrices`].
    pub fn printed_c0(&self) -> Result<CMat3> {
        let mut c = CMat3::zeros();
        for mp in -1i64..=1 {
            let row = self.a(1, mp, 0, 0)? * Complex64::from(-4.0) + self.a(0, 0, 1, mp)?.map(|v| v.conj());
            c.set_row((mp + 1) as usize, &row.transpose());
        }
        Ok(c)
    }

    /// The printed closed form of the `Q_0` projection matrix, row `m' + 1`
    /// equal to `a_{1,0}^{m',0} - conj(a_{0,1}^{0,m'})`.
    pub fn printed_d0(&self) -> Result<CMat3> {
        let mut d = CMat3::zeros();
        for mp in -1i64..=1 {
            let row = self.a(1, mp, 0, 0)? - self.a(0, 0, 1, mp)?.map(|v| v.conj());
            d.set_row((mp + 1) as usize, &row.transpose());
        }
        Ok(d)
    }
}

/// Coefficient `c_{n',n}^{m',m}` of `N_{n'+1}^{m'}` from the coupling integrals.
pub fn coupling_c(np: usize, mp: i64, n: usize, m: i64, t: &CouplingTables) -> Result<CVec3> {
    let (npf, nf) = (np as f64, n as f64);
    let k = (npf + 1.0) * (npf + nf + 1.0);
    let num = t.a(np, mp, n, m)? * Complex64::from(k) - t.b(np, mp, n, m)? * Complex64::from(k * (nf + 2.0))
        + t.a(n, m, np, mp)?.map(|v| v.conj());
    Ok(num / Complex64::from((npf + 1.0) * (2.0 * npf + 1.0)))
}

/// Coefficient `d_{n',n}^{m',m}` of `Q_{n'-1}^{m'}`; needs `n' >= 1`.
pub fn coupling_d(np: usize, mp: i64, n: usize, m: i64, t: &CouplingTables) -> Result<CVec3> {
    if np == 0 {
        return Err(GeomagError::domain("d coefficient is undefined for n' = 0"));
    }
    let (npf, nf) = (np as f64, n as f64);
    let k = npf * (nf - npf);
    let num = t.a(np, mp, n, m)? * Complex64::from(k) - t.b(np, mp, n, m)? * Complex64::from(k * (nf + 2.0))
        - t.a(n, m, np, mp)?.map(|v| v.conj());
    Ok(num / Complex64::from(npf * (2.0 * npf + 1.0)))
}

pub fn coupling_cd(np: usize, mp: i64, n: usize, m: i64, t: &CouplingTables) -> Result<(CVec3, CVec3)> {
    Ok((coupling_c(np, mp, n, m, t)?, coupling_d(np, mp, n, m, t)?))
}

/// Coefficients of `N_{n'+1}^{m'}` and `Q_{n'-1}^{m'}` in `A_n^m xi`, obtained by
/// projecting `A_n^m e_k` directly onto the vector harmonics. Row `k` of the
/// returned vectors is the coefficient for `xi = e_k`. `d` is zero for `n' = 0`.
pub fn projected_cd(np: usize, mp: i64, n: usize, m: i64, quad: &QuadRule) -> Result<(CVec3, CVec3)> {
    let top = n.max(np);
    check_lm(np, mp, top)?;
    check_lm(n, m, top)?;
    quad.require(n + np + 2)?;
    let mut c = CVec3::zeros();
    let mut d = CVec3::zeros();
    for node in quad.nodes() {
        let t = SphericalTable::new(&node.dir, top, Derivs::Hessian);
        let a = t.a_matrix(n, m);
        let nv = t.n_vec(np, mp).map(|v| v.conj());
        c += a.transpose() * nv * Complex64::from(node.weight);
        if np > 0 {
            let qv = t.q_vec(np, mp).map(|v| v.conj());
            d += a.transpose() * qv * Complex64::from(node.weight);
        }
    }
    let npf = np as f64;
    c /= Complex64::from((npf + 1.0) * (2.0 * npf + 1.0));
    if np > 0 {
        d /= Complex64::from(npf * (2.0 * npf + 1.0));
    }
    Ok((c, d))
}

/// Projections of the degree-0 kernel matrix onto `N_2` and `Q_0`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProjectionMatrices {
    /// Row `m' + 1`, column `k`: `int conj(N_2^{m'}) . A_0^0 e_k ds`.
    pub c: CMat3,
    /// Row `m' + 1`, column `k`: `int conj(Q_0^{m'}) . A_0^0 e_k ds`.
    pub d: CMat3,
    pub cond_c: f64,
    /// Infinite when `d` is singular.
    pub cond_d: f64,
}

/// Infinite when the matrix is negligible against `scale` or rank deficient.
fn condition_number(m: &CMat3, scale: f64) -> f64 {
    let sv = m.singular_values();
    let (hi, lo) = (sv.max(), sv.min());
    if hi <= scale * 1e-12 || lo <= hi * 1e-13 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub fn projection_matrices(quad: &QuadRule) -> Result<ProjectionMatrices> {
    quad.require(6)?;
    let mut c = CMat3::zeros();
    let mut d = CMat3::zeros();
    for node in quad.nodes() {
        let t = SphericalTable::new(&node.dir, 1, Derivs::Hessian);
        let a = t.a_matrix(0, 0);
        for mp in -1i64..=1 {
            let r = (mp + 1) as usize;
            let nrow = (a.transpose() * t.n_vec(1, mp).map(|v| v.conj())).transpose() * Complex64::from(node.weight);
            let qrow = (a.transpose() * t.q_vec(1, mp).map(|v| v.conj())).transpose() * Complex64::from(node.weight);
            c.set_row(r, &(c.row(r) + nrow));
            d.set_row(r, &(d.row(r) + qrow));
        }
    }
    let cond_c = condition_number(&c, c.norm());
    if !cond_c.is_finite() {
        return Err(GeomagError::DegenerateBasis("N_2 projection matrix is singular".into()));
    }
    let cond_d = condition_number(&d, c.norm());
    Ok(ProjectionMatrices { c, d, cond_c, cond_d })
}

impl ProjectionMatrices {
    pub fn c_inverse(&self) -> Result<CMat3> {
        self.c
            .try_inverse()
            .ok_or_else(|| GeomagError::DegenerateBasis("N_2 projection matrix is singular".into()))
    }

    /// `None` when `d` is singular.
    pub fn d_inverse(&self) -> Option<CMat3> {
        if self.cond_d.is_finite() {
            self.d.try_inverse()
        } else {
            None
        }
    }
}
