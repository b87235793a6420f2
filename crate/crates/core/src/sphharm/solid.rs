//! Regular solid harmonics `h_n^m(x) = |x|^n Y_n^m(x/|x|)` in Cartesian form.
//!
//! The values, gradients and Hessians are produced together by the
//! three-term Legendre recurrence written in `x, y, z`, so nothing here
//! ever divides by `sin(theta)`. Everything on the unit sphere (surface
//! gradients, vector harmonics, the `A` matrices) is derived from this table.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::{CMat3, CVec3};

/// Flat index of `(n, m)` in a degree-major table.
#[inline]
pub fn lm_index(n: usize, m: i64) -> usize {
    ((n * n + n) as i64 + m) as usize
}

use lm_index as idx;

/// Number of `(n, m)` pairs with `n <= nmax`.
#[inline]
pub fn table_len(nmax: usize) -> usize {
    (nmax + 1) * (nmax + 1)
}

/// How many derivatives to carry through the recurrence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Derivs {
    Value,
    Gradient,
    Hessian,
}

#[derive(Clone, Debug)]
pub struct SolidHarmonics {
    nmax: usize,
    point: Vector3<f64>,
    vals: Vec<Complex64>,
    grads: Vec<CVec3>,
    hess: Vec<CMat3>,
}

#[inline]
fn re(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

fn zero_vec() -> CVec3 {
    CVec3::zeros()
}

fn outer(a: &CVec3, b: &CVec3) -> CMat3 {
    a * b.transpose()
}

impl SolidHarmonics {
    pub fn evaluate(x: &Vector3<f64>, nmax: usize, derivs: Derivs) -> Self {
        let len = table_len(nmax);
        let want_g = derivs >= Derivs::Gradient;
        let want_h = derivs >= Derivs::Hessian;
        let mut vals = vec![Complex64::new(0.0, 0.0); len];
        let mut grads = if want_g { vec![zero_vec(); len] } else { Vec::new() };
        let mut hess = if want_h { vec![CMat3::zeros(); len] } else { Vec::new() };

        let xc: CVec3 = x.map(|v| Complex64::new(v, 0.0));
        let zeta = Complex64::new(x[0], x[1]);
        let dzeta = CVec3::new(
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, 0.0),
        );
        let ez = CVec3::new(
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
        );
        let zc = re(x[2]);
        let r2c = re(x.norm_squared());
        let eye: CMat3 = Matrix3::identity().map(|v: f64| Complex64::new(v, 0.0));

        vals[idx(0, 0)] = Complex64::new(0.5 / PI.sqrt(), 0.0);

        for m in 0..=nmax {
            let mi = m as i64;
            if m > 0 {
                // h_m^m = -sqrt((2m+1)/(2m)) (x + iy) h_{m-1}^{m-1}
                let c = re(-(((2 * m + 1) as f64) / ((2 * m) as f64)).sqrt());
                let p = idx(m - 1, mi - 1);
                let (v0, t) = (vals[p], idx(m, mi));
                vals[t] = zeta * v0 * c;
                if want_g {
                    let g0 = grads[p];
                    grads[t] = (dzeta * v0 + g0 * zeta) * c;
                    if want_h {
                        let h0 = hess[p];
                        hess[t] = (outer(&dzeta, &g0) + outer(&g0, &dzeta) + h0 * zeta) * c;
                    }
                }
            }
            if m + 1 <= nmax {
                // h_{m+1}^m = sqrt(2m+3) z h_m^m
                let c = re(((2 * m + 3) as f64).sqrt());
                let p = idx(m, mi);
                let (v0, t) = (vals[p], idx(m + 1, mi));
                vals[t] = v0 * zc * c;
                if want_g {
                    let g0 = grads[p];
                    grads[t] = (ez * v0 + g0 * zc) * c;
                    if want_h {
                        let h0 = hess[p];
                        hess[t] = (outer(&ez, &g0) + outer(&g0, &ez) + h0 * zc) * c;
                    }
                }
            }
            for n in (m + 2)..=nmax {
                let nf = n as f64;
                let mf = m as f64;
                let denom = nf * nf - mf * mf;
                let a = re(((4.0 * nf * nf - 1.0) / denom).sqrt());
                let b = re(((2.0 * nf + 1.0) * ((nf - 1.0) * (nf - 1.0) - mf * mf)
                    / ((2.0 * nf - 3.0) * denom))
                    .sqrt());
                let p1 = idx(n - 1, mi);
                let p2 = idx(n - 2, mi);
                let t = idx(n, mi);
                let (v1, v2) = (vals[p1], vals[p2]);
                vals[t] = v1 * a * zc - v2 * b * r2c;
                if want_g {
                    let (g1, g2) = (grads[p1], grads[p2]);
                    grads[t] = (ez * v1 + g1 * zc) * a - (xc * (v2 * 2.0) + g2 * r2c) * b;
                    if want_h {
                        let (h1, h2) = (hess[p1], hess[p2]);
                        hess[t] = (outer(&ez, &g1) + outer(&g1, &ez) + h1 * zc) * a
                            - (eye * (v2 * 2.0)
                                + (outer(&xc, &g2) + outer(&g2, &xc)) * re(2.0)
                                + h2 * r2c)
                                * b;
                    }
                }
            }
        }

        // h_n^{-m} = (-1)^m conj(h_n^m) for real arguments.
        for n in 1..=nmax {
            for m in 1..=n as i64 {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                let (src, dst) = (idx(n, m), idx(n, -m));
                vals[dst] = vals[src].conj() * sign;
                if want_g {
                    grads[dst] = grads[src].map(|c| c.conj() * sign);
                }
                if want_h {
                    hess[dst] = hess[src].map(|c| c.conj() * sign);
                }
            }
        }

        SolidHarmonics {
            nmax,
            point: *x,
            vals,
            grads,
            hess,
        }
    }

    pub fn nmax(&self) -> usize {
        self.nmax
    }

    pub fn point(&self) -> &Vector3<f64> {
        &self.point
    }

    #[inline]
    pub fn value(&self, n: usize, m: i64) -> Complex64 {
        self.vals[idx(n, m)]
    }

    /// Panics if the table was built without gradients.
    #[inline]
    pub fn gradient(&self, n: usize, m: i64) -> &CVec3 {
        &self.grads[idx(n, m)]
    }

    /// Panics if the table was built without Hessians.
    #[inline]
    pub fn hessian(&self, n: usize, m: i64) -> &CMat3 {
        &self.hess[idx(n, m)]
    }
}
