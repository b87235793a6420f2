use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::moments::{dipole_model_field, extract_moments, locate_single, MomentTable};
use super::recover::{alpha_from_ratio, recover_alpha, recover_mu, weight_ratio, MuShape};
use crate::forward::{validate_scene, Scene, Shape, VectorFieldSamples, ALPHA_WINDOW, SEPARABILITY_TOL};
use crate::layerpot::{assemble_k_star, NPOperator};
use crate::sphharm::{Derivs, SolidHarmonics};
use crate::{CVec3, GeomagError, Result, Vec3};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructOptions {
    /// Highest moment degree used in the fit; at least `l0 + 2`.
    pub nmax: usize,
    pub starts: usize,
    pub max_iterations: usize,
    /// Fitted centers closer than this are merged. Defaults to `0.01 R`.
    pub merge_radius: Option<f64>,
    /// Offset into the quasi-random start sequence.
    pub seed: u64,
    /// Known background field and materials (their `mu` is ignored) used to
    /// recover permeabilities. Each recovered anomaly takes the material and
    /// shape of the nearest anomaly listed here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Scene>,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        ReconstructOptions {
            nmax: 5,
            starts: 32,
            max_iterations: 500,
            merge_radius: None,
            seed: 0,
            prior: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnomalyDiagnostics {
    /// Weight negligible next to the others, or absorbed by a merge.
    pub ghost: bool,
    pub pairing_distance: Option<f64>,
    /// Angle between the fitted `w` and `v`.
    pub parallel_angle: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveredAnomaly {
    pub z: [f64; 3],
    pub w_re: [f64; 3],
    pub w_im: [f64; 3],
    pub v_re: Option<[f64; 3]>,
    pub v_im: Option<[f64; 3]>,
    pub alpha: Option<f64>,
    pub mu: Option<f64>,
    pub diagnostics: AnomalyDiagnostics,
}

fn split(v: &CVec3) -> ([f64; 3], [f64; 3]) {
    ([v[0].re, v[1].re, v[2].re], [v[0].im, v[1].im, v[2].im])
}

fn join(re: &[f64; 3], im: &[f64; 3]) -> CVec3 {
    CVec3::new(
        Complex64::new(re[0], im[0]),
        Complex64::new(re[1], im[1]),
        Complex64::new(re[2], im[2]),
    )
}

impl RecoveredAnomaly {
    pub fn center(&self) -> Vec3 {
        Vec3::from(self.z)
    }

    pub fn w(&self) -> CVec3 {
        join(&self.w_re, &self.w_im)
    }

    pub fn v(&self) -> Option<CVec3> {
        Some(join(self.v_re.as_ref()?, self.v_im.as_ref()?))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub nmax: usize,
    pub starts: usize,
    pub converged_starts: usize,
    pub best_start: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Condition number of the moment-fit Jacobian at the solution.
    pub jacobian_condition: f64,
    /// Weighted moment misfit relative to the weighted moment norm.
    pub moment_residual: f64,
    pub epoch0_residual: Option<f64>,
    pub epoch0_converged: Option<bool>,
    /// Smallest `|3(alpha_i + 1) - 4(alpha_j + 1)|` over ordered pairs.
    pub separability_gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub anomalies: Vec<RecoveredAnomaly>,
    /// RMS of `|model - samples|` over the difference-field nodes.
    pub residual: f64,
    pub relative_residual: f64,
    pub diagnostics: FitDiagnostics,
    pub warnings: Vec<String>,
}

impl ReconstructionResult {
    /// Turns a non-converged fit into an optimization failure.
    pub fn ensure_converged(self) -> Result<Self> {
        if self.diagnostics.converged {
            Ok(self)
        } else {
            Err(GeomagError::OptimizationFailure {
                iterations: self.diagnostics.iterations,
                residual: self.residual,
            })
        }
    }
}

/// Dipole fit of one epoch: centers and scaled weights `W_l = delta^3 w_l`.
#[derive(Clone, Debug)]
struct Fit {
    centers: Vec<Vec3>,
    weights: Vec<CVec3>,
    cost: f64,
    iterations: usize,
    converged: bool,
    start: usize,
}

struct Problem<'a> {
    moments: &'a MomentTable,
    l0: usize,
    nmax: usize,
    scales: Vec<f64>,
    data_norm: f64,
    max_center: f64,
}

impl<'a> Problem<'a> {
    fn new(moments: &'a MomentTable, l0: usize, nmax: usize) -> Self {
        let r = moments.radius;
        // Weighting each degree like this makes the moment misfit equal to the L2 misfit on the sphere.
        let scales: Vec<f64> = (0..=nmax)
            .map(|n| (((n + 1) * (2 * n + 1)) as f64).sqrt() * r.powi(1 - n as i32))
            .collect();
        let mut norm = 0.0;
        for n in 1..=nmax {
            for m in -(n as i64)..=(n as i64) {
                norm += (moments.get(n, m) * scales[n]).norm_sqr();
            }
        }
        Problem {
            moments,
            l0,
            nmax,
            scales,
            data_norm: norm.sqrt(),
            max_center: 0.95 * r,
        }
    }

    fn rows(&self) -> usize {
        2 * (self.nmax * self.nmax + 2 * self.nmax)
    }

    fn params(&self) -> usize {
        9 * self.l0
    }

    fn unpack(&self, p: &DVector<f64>) -> (Vec<Vec3>, Vec<CVec3>) {
        let mut zs = Vec::with_capacity(self.l0);
        let mut ws = Vec::with_capacity(self.l0);
        for l in 0..self.l0 {
            let b = 9 * l;
            zs.push(Vec3::new(p[b], p[b + 1], p[b + 2]));
            ws.push(CVec3::new(
                Complex64::new(p[b + 3], p[b + 6]),
                Complex64::new(p[b + 4], p[b + 7]),
                Complex64::new(p[b + 5], p[b + 8]),
            ));
        }
        (zs, ws)
    }

    fn pack(&self, zs: &[Vec3], ws: &[CVec3]) -> DVector<f64> {
        let mut p = DVector::zeros(self.params());
        for l in 0..self.l0 {
            let b = 9 * l;
            for k in 0..3 {
                p[b + k] = zs[l][k];
                p[b + 3 + k] = ws[l][k].re;
                p[b + 6 + k] = ws[l][k].im;
            }
        }
        p
    }

    /// Weighted residual and, optionally, its Jacobian.
    fn evaluate(&self, p: &DVector<f64>, jac: bool) -> (DVector<f64>, Option<DMatrix<f64>>) {
        let (zs, ws) = self.unpack(p);
        let mut r = DVector::zeros(self.rows());
        let mut j = if jac { Some(DMatrix::zeros(self.rows(), self.params())) } else { None };
        let derivs = if jac { Derivs::Hessian } else { Derivs::Gradient };
        let tabs: Vec<SolidHarmonics> = zs.iter().map(|z| SolidHarmonics::evaluate(z, self.nmax, derivs)).collect();
        let mut row = 0;
        for n in 1..=self.nmax {
            let k = self.scales[n] / (2 * n + 1) as f64;
            for m in -(n as i64)..=(n as i64) {
                let mut model = Complex64::new(0.0, 0.0);
                for l in 0..self.l0 {
                    let g = tabs[l].gradient(n, m).map(|c| c.conj());
                    model += g.dot(&ws[l]) * k;
                    if let Some(j) = j.as_mut() {
                        let dz = tabs[l].hessian(n, m).map(|c| c.conj()) * ws[l] * Complex64::from(k);
                        let b = 9 * l;
                        for c in 0..3 {
                            j[(row, b + c)] = dz[c].re;
                            j[(row + 1, b + c)] = dz[c].im;
                            let gk = g[c] * k;
                            j[(row, b + 3 + c)] = gk.re;
                            j[(row + 1, b + 3 + c)] = gk.im;
                            // d/d(Im W) multiplies by i.
                            j[(row, b + 6 + c)] = -gk.im;
                            j[(row + 1, b + 6 + c)] = gk.re;
                        }
                    }
                }
                let d = model - self.moments.get(n, m) * self.scales[n];
                r[row] = d.re;
                r[row + 1] = d.im;
                row += 2;
            }
        }
        (r, j)
    }

    /// Least-squares weights for fixed centers.
    fn linear_weights(&self, zs: &[Vec3]) -> Vec<CVec3> {
        let tabs: Vec<SolidHarmonics> = zs.iter().map(|z| SolidHarmonics::evaluate(z, self.nmax, Derivs::Gradient)).collect();
        let rows = self.rows() / 2;
        let mut a = DMatrix::<Complex64>::zeros(rows, 3 * self.l0);
        let mut b = DVector::<Complex64>::zeros(rows);
        let mut row = 0;
        for n in 1..=self.nmax {
            let k = self.scales[n] / (2 * n + 1) as f64;
            for m in -(n as i64)..=(n as i64) {
                for (l, t) in tabs.iter().enumerate() {
                    let g = t.gradient(n, m);
                    for c in 0..3 {
                        a[(row, 3 * l + c)] = g[c].conj() * k;
                    }
                }
                b[row] = self.moments.get(n, m) * self.scales[n];
                row += 1;
            }
        }
        let svd = a.svd(true, true);
        let tol = svd.singular_values.max() * 1e-12;
        let x = svd.solve(&b, tol).unwrap_or_else(|_| DVector::zeros(3 * self.l0));
        (0..self.l0).map(|l| CVec3::new(x[3 * l], x[3 * l + 1], x[3 * l + 2])).collect()
    }

    fn lm(&self, p0: DVector<f64>, max_iterations: usize, start: usize) -> Fit {
        let mut p = p0;
        let (mut r, mut j) = self.evaluate(&p, true);
        let mut cost = 0.5 * r.norm_squared();
        let mut lambda = 1e-3;
        let mut converged = false;
        let mut iterations = 0;
        let target = 1e-12 * self.data_norm;
        while iterations < max_iterations {
            iterations += 1;
            if (2.0 * cost).sqrt() <= target {
                converged = true;
                break;
            }
            let jm = j.as_ref().expect("jacobian");
            let jt = jm.transpose();
            let a = &jt * jm;
            let g = &jt * &r;
            let mut accepted = false;
            while lambda < 1e20 {
                let mut damped = a.clone();
                for i in 0..damped.nrows() {
                    damped[(i, i)] += lambda * a[(i, i)].max(1e-300);
                }
                let step = match damped.cholesky() {
                    Some(ch) => -ch.solve(&g),
                    None => {
                        lambda *= 4.0;
                        continue;
                    }
                };
                let trial = &p + &step;
                let (zs, _) = self.unpack(&trial);
                if zs.iter().any(|z| z.norm() >= self.max_center) || !trial.iter().all(|v| v.is_finite()) {
                    lambda *= 4.0;
                    continue;
                }
                let (rt, _) = self.evaluate(&trial, false);
                let ct = 0.5 * rt.norm_squared();
                if ct < cost {
                    let small = step.norm() <= 1e-12 * (1.0 + p.norm());
                    p = trial;
                    let (rn, jn) = self.evaluate(&p, true);
                    r = rn;
                    j = jn;
                    cost = 0.5 * r.norm_squared();
                    lambda = (lambda / 3.0).max(1e-15);
                    accepted = true;
                    if small {
                        converged = true;
                    }
                    break;
                }
                if step.norm() <= 1e-12 * (1.0 + p.norm()) {
                    // No descent left at machine precision: a stationary point.
                    converged = true;
                    break;
                }
                lambda *= 4.0;
            }
            if converged {
                break;
            }
            if !accepted {
                converged = lambda >= 1e20;
                break;
            }
        }
        let (centers, weights) = self.unpack(&p);
        Fit {
            centers,
            weights,
            cost,
            iterations,
            converged,
            start,
        }
    }

    fn jacobian_condition(&self, fit: &Fit) -> f64 {
        let (_, j) = self.evaluate(&self.pack(&fit.centers, &fit.weights), true);
        let sv = j.expect("jacobian").singular_values();
        let (hi, lo) = (sv.max(), sv.min());
        if lo > 0.0 {
            hi / lo
        } else {
            f64::INFINITY
        }
    }

    fn relative_misfit(&self, fit: &Fit) -> f64 {
        (2.0 * fit.cost).sqrt() / self.data_norm.max(f64::MIN_POSITIVE)
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut x = 0.0;
    while i > 0 {
        f /= base as f64;
        x += f * (i % base) as f64;
        i /= base;
    }
    x
}

/// Halton point mapped uniformly into the ball of radius `rho`.
fn halton_ball(i: u64, rho: f64) -> Vec3 {
    let (u, v, w) = (radical_inverse(i, 2), radical_inverse(i, 3), radical_inverse(i, 5));
    let r = rho * u.cbrt();
    let ct = 2.0 * v - 1.0;
    let st = (1.0 - ct * ct).max(0.0).sqrt();
    let ph = 2.0 * PI * w;
    Vec3::new(r * st * ph.cos(), r * st * ph.sin(), r * ct)
}

fn start_centers(k: usize, l0: usize, seed: u64, rho: f64) -> Vec<Vec3> {
    (0..l0)
        .map(|l| halton_ball(1 + seed * 10_007 + (k * l0 + l) as u64, rho))
        .collect()
}

/// Multi-start fit of `l0` point dipoles to the moments, best residual wins.
fn fit_epoch<'a>(moments: &'a MomentTable, l0: usize, delta: f64, opts: &ReconstructOptions) -> (Fit, usize, Problem<'a>) {
    let prob = Problem::new(moments, l0, opts.nmax);
    let rho = 0.5 * moments.radius;
    let mut seeds: Vec<Vec<Vec3>> = Vec::with_capacity(opts.starts.max(1));
    if l0 == 1 {
        if let Ok((z, _)) = locate_single(moments, delta) {
            if z.norm() < prob.max_center {
                seeds.push(vec![z]);
            }
        }
    }
    let mut k = 0;
    while seeds.len() < opts.starts.max(1) {
        seeds.push(start_centers(k, l0, opts.seed, rho));
        k += 1;
    }
    let fits: Vec<Fit> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, zs)| {
            let ws = prob.linear_weights(zs);
            prob.lm(prob.pack(zs, &ws), opts.max_iterations, i)
        })
        .collect();
    let converged = fits.iter().filter(|f| f.converged).count();
    let best = fits
        .into_iter()
        .min_by(|a, b| {
            // Prefer converged fits, then lower cost, then earlier start.
            b.converged.cmp(&a.converged).then(a.cost.total_cmp(&b.cost)).then(a.start.cmp(&b.start))
        })
        .expect("at least one start");
    (best, converged, prob)
}

/// Merges centers closer than `radius` and marks negligible weights as ghosts.
fn merge_ghosts(fit: &mut Fit, radius: f64, warnings: &mut Vec<String>, label: &str) -> Vec<bool> {
    let l0 = fit.centers.len();
    let mut ghost = vec![false; l0];
    for i in 0..l0 {
        for j in (i + 1)..l0 {
            if ghost[i] || ghost[j] {
                continue;
            }
            let d = (fit.centers[i] - fit.centers[j]).norm();
            if d <= radius {
                let (wi, wj) = (fit.weights[i].norm(), fit.weights[j].norm());
                let (keep, drop) = if wi >= wj { (i, j) } else { (j, i) };
                let t = if wi + wj > 0.0 { wj / (wi + wj) } else { 0.5 };
                let merged_center = fit.centers[i] * (1.0 - t) + fit.centers[j] * t;
                let w = fit.weights[i] + fit.weights[j];
                fit.centers[keep] = merged_center;
                fit.weights[keep] = w;
                fit.weights[drop] = CVec3::zeros();
                fit.centers[drop] = merged_center;
                ghost[drop] = true;
                warnings.push(format!(
                    "identifiability: {label} centers {i} and {j} are {d:.3e} apart (merge radius {radius:.3e}); merged into one anomaly"
                ));
            }
        }
    }
    let wmax = fit.weights.iter().map(|w| w.norm()).fold(0.0, f64::max);
    for l in 0..l0 {
        if !ghost[l] && fit.weights[l].norm() <= 1e-6 * wmax {
            ghost[l] = true;
            warnings.push(format!(
                "identifiability: {label} anomaly {l} has negligible weight; the data support fewer than l0 anomalies"
            ));
        }
    }
    ghost
}

/// Refits with ghosts frozen at zero weight.
fn polish(prob: &Problem<'_>, fit: &Fit, ghost: &[bool], max_iterations: usize) -> Fit {
    let active: Vec<usize> = (0..ghost.len()).filter(|&l| !ghost[l]).collect();
    if active.len() == ghost.len() || active.is_empty() {
        return fit.clone();
    }
    let sub = Problem::new(prob.moments, active.len(), prob.nmax);
    let zs: Vec<Vec3> = active.iter().map(|&l| fit.centers[l]).collect();
    let ws: Vec<CVec3> = active.iter().map(|&l| fit.weights[l]).collect();
    let refined = sub.lm(sub.pack(&zs, &ws), max_iterations, fit.start);
    let mut out = fit.clone();
    for (k, &l) in active.iter().enumerate() {
        out.centers[l] = refined.centers[k];
        out.weights[l] = refined.weights[k];
    }
    out.cost = refined.cost;
    out.iterations += refined.iterations;
    out.converged = refined.converged;
    out
}

fn sample_misfit(samples: &VectorFieldSamples, fit: &Fit) -> Result<f64> {
    let r = samples.radius();
    let mut acc = 0.0;
    for (node, h) in samples.quad.nodes().iter().zip(&samples.values) {
        let m = dipole_model_field(&fit.centers, &fit.weights, &(node.dir.vector() * r))?;
        acc += (m - h).norm_squared();
    }
    Ok((acc / samples.len().max(1) as f64).sqrt())
}

/// Greedy nearest-center pairing of difference-field anomalies with epoch-0 anomalies.
fn pair(delta_fit: &Fit, epoch0: &Fit) -> Vec<(usize, usize, f64)> {
    let mut cands = Vec::new();
    for (i, (zi, wi)) in delta_fit.centers.iter().zip(&delta_fit.weights).enumerate() {
        for (j, (zj, vj)) in epoch0.centers.iter().zip(&epoch0.weights).enumerate() {
            let d = (zi - zj).norm();
            let sim = if wi.norm() > 0.0 && vj.norm() > 0.0 {
                wi.dotc(vj).norm() / (wi.norm() * vj.norm())
            } else {
                0.0
            };
            cands.push((d, -sim, i, j));
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut used_i = vec![false; delta_fit.centers.len()];
    let mut used_j = vec![false; epoch0.centers.len()];
    let mut out = Vec::new();
    for (d, _, i, j) in cands {
        if !used_i[i] && !used_j[j] {
            used_i[i] = true;
            used_j[j] = true;
            out.push((i, j, d));
        }
    }
    out.sort_by_key(|p| p.0);
    out
}

struct PriorContext<'a> {
    scene: &'a Scene,
    ops: Vec<(Shape, NPOperator)>,
}

impl<'a> PriorContext<'a> {
    fn new(scene: &'a Scene) -> Result<Self> {
        let mut ops: Vec<(Shape, NPOperator)> = Vec::new();
        for a in &scene.anomalies {
            if a.shape != Shape::Ball && !ops.iter().any(|(s, _)| s == &a.shape) {
                let mesh = a.shape.mesh()?.expect("mesh-backed shape");
                ops.push((a.shape.clone(), assemble_k_star(&mesh)?));
            }
        }
        Ok(PriorContext { scene, ops })
    }

    fn mu(&self, z: &Vec3, v: &CVec3) -> Result<f64> {
        let a = self
            .scene
            .anomalies
            .iter()
            .min_by(|a, b| (a.z() - z).norm().total_cmp(&(b.z() - z).norm()))
            .ok_or_else(|| GeomagError::domain("prior scene lists no anomalies"))?;
        let h0 = self.scene.background.eval(z)?;
        let shape = match &a.shape {
            Shape::Ball => MuShape::Ball,
            s => MuShape::Mesh(&self.ops.iter().find(|(k, _)| k == s).expect("assembled").1),
        };
        recover_mu(v, &h0, &self.scene.materials, a.material, shape)
    }
}

/// Fits `l0` point dipoles to the difference-field moments and, with epoch-0
/// data, recovers exponents and (given a prior) permeabilities.
///
/// A fit that does not converge is still returned, with
/// `diagnostics.converged = false`; see [`ReconstructionResult::ensure_converged`].
pub fn reconstruct_multi(
    samples_delta: &VectorFieldSamples,
    samples_epoch0: Option<&VectorFieldSamples>,
    l0: usize,
    delta: f64,
    opts: &ReconstructOptions,
) -> Result<ReconstructionResult> {
    if l0 == 0 {
        return Err(GeomagError::domain("l0 must be at least 1"));
    }
    if opts.nmax < l0 + 2 {
        return Err(GeomagError::domain(format!("nmax = {} must be at least l0 + 2 = {}", opts.nmax, l0 + 2)));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(GeomagError::domain(format!("delta = {delta} must lie in (0, 1)")));
    }
    if let Some(e0) = samples_epoch0 {
        samples_delta.check_same_grid(e0)?;
    }
    let merge_radius = opts.merge_radius.unwrap_or(0.01 * samples_delta.radius());
    let mut warnings = Vec::new();
    let d3 = Complex64::from(delta.powi(3));

    let moments = extract_moments(samples_delta, opts.nmax)?;
    let (best, converged_starts, prob) = fit_epoch(&moments, l0, delta, opts);
    let mut fit = best;
    let ghost = merge_ghosts(&mut fit, merge_radius, &mut warnings, "difference-field");
    let fit = polish(&prob, &fit, &ghost, opts.max_iterations);
    let mut diagnostics = FitDiagnostics {
        nmax: opts.nmax,
        starts: opts.starts.max(1),
        converged_starts,
        best_start: fit.start,
        iterations: fit.iterations,
        converged: fit.converged,
        jacobian_condition: prob.jacobian_condition(&fit),
        moment_residual: prob.relative_misfit(&fit),
        ..Default::default()
    };
    if !fit.converged {
        warnings.push(format!(
            "optimizer did not converge in {} iterations; reporting the best fit found",
            opts.max_iterations
        ));
    }
    let residual = sample_misfit(samples_delta, &fit)?;
    let rms = samples_delta.rms();
    let relative_residual = if rms > 0.0 { residual / rms } else { 0.0 };

    let mut anomalies: Vec<RecoveredAnomaly> = fit
        .centers
        .iter()
        .zip(&fit.weights)
        .enumerate()
        .map(|(l, (z, w))| {
            let (w_re, w_im) = split(&(w / d3));
            RecoveredAnomaly {
                z: [z[0], z[1], z[2]],
                w_re,
                w_im,
                v_re: None,
                v_im: None,
                alpha: None,
                mu: None,
                diagnostics: AnomalyDiagnostics {
                    ghost: ghost[l],
                    ..Default::default()
                },
            }
        })
        .collect();

    match samples_epoch0 {
        None => warnings.push("alpha and mu unrecoverable: epoch-0 data required".to_string()),
        Some(e0) => {
            let m0 = extract_moments(e0, opts.nmax)?;
            let (best0, _, prob0) = fit_epoch(&m0, l0, delta, opts);
            let mut fit0 = best0;
            let ghost0 = merge_ghosts(&mut fit0, merge_radius, &mut warnings, "epoch-0");
            let fit0 = polish(&prob0, &fit0, &ghost0, opts.max_iterations);
            diagnostics.epoch0_residual = Some(prob0.relative_misfit(&fit0));
            diagnostics.epoch0_converged = Some(fit0.converged);
            let prior = match &opts.prior {
                Some(s) => Some(PriorContext::new(s)?),
                None => {
                    warnings.push("mu unrecoverable: background field and materials not supplied".to_string());
                    None
                }
            };
            for (i, j, d) in pair(&fit, &fit0) {
                let a = &mut anomalies[i];
                let v = fit0.weights[j] / d3;
                let (v_re, v_im) = split(&v);
                a.v_re = Some(v_re);
                a.v_im = Some(v_im);
                a.diagnostics.pairing_distance = Some(d);
                if d > merge_radius {
                    warnings.push(format!(
                        "anomaly {i}: difference-field and epoch-0 centers differ by {d:.3e}, above the merge radius"
                    ));
                }
                let w = a.w();
                if let Ok((rho, angle)) = weight_ratio(&w, &v) {
                    a.diagnostics.parallel_angle = Some(angle);
                    a.alpha = match recover_alpha(&w, &v, delta) {
                        Ok(al) => Some(al),
                        Err(GeomagError::InconsistentEpochs(msg)) => {
                            warnings.push(format!("anomaly {i}: {msg}; alpha taken from the real part of the ratio"));
                            alpha_from_ratio(rho.re, delta).ok()
                        }
                        Err(e) => {
                            warnings.push(format!("anomaly {i}: {e}"));
                            None
                        }
                    };
                }
                if let Some(ctx) = &prior {
                    // Use the epoch-0 center: it locates the anomaly even when w vanishes.
                    match ctx.mu(&fit0.centers[j], &v) {
                        Ok(mu) => a.mu = Some(mu),
                        Err(e) => warnings.push(format!("anomaly {i}: mu not recovered: {e}")),
                    }
                }
            }
        }
    }

    let alphas: Vec<(usize, f64)> = anomalies
        .iter()
        .enumerate()
        .filter(|(_, a)| !a.diagnostics.ghost)
        .filter_map(|(l, a)| a.alpha.map(|x| (l, x)))
        .collect();
    if alphas.len() > 1 {
        let mut gap = f64::INFINITY;
        for &(i, ai) in &alphas {
            if !(ai > ALPHA_WINDOW.0 && ai < ALPHA_WINDOW.1) {
                warnings.push(format!("validity: -1/4 < alpha < 1/3 violated by recovered anomaly {i} (alpha = {ai:.6})"));
            }
            for &(j, aj) in &alphas {
                if i != j {
                    let g = (3.0 * (ai + 1.0) - 4.0 * (aj + 1.0)).abs();
                    gap = gap.min(g);
                    if g <= SEPARABILITY_TOL {
                        warnings.push(format!("validity: 3(alpha_{i} + 1) = 4(alpha_{j} + 1) for the recovered exponents"));
                    }
                }
            }
        }
        diagnostics.separability_gap = Some(gap);
    } else if let Some(&(i, a)) = alphas.first() {
        if a <= -1.0 {
            warnings.push(format!("validity: alpha > -1 violated by recovered anomaly {i}"));
        }
    }
    if let Some(prior) = &opts.prior {
        let rep = validate_scene(prior);
        for w in rep.warnings {
            log::debug!("prior scene: {w}");
        }
    }

    Ok(ReconstructionResult {
        anomalies,
        residual,
        relative_residual,
        diagnostics,
        warnings,
    })
}
