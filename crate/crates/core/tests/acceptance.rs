//! Acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! Exits 0 after reporting unless `GEOMAG_ACCEPTANCE_STRICT=1`, in which case
//! any failed criterion makes the process exit 1.

use std::f64::consts::PI;
use std::time::Instant;

use geomag_core::forward::{
    dipole_weights, hessian_gamma0, grad_gamma0, kernel_multipole_grad, kernel_multipole_hessian, scene_tensors,
    secular_variation, synthesize_measurement, validate_scene, Anomaly, BackgroundField, CheckKind, DipoleWeight,
    Epoch, Scene, Shape, VectorFieldSamples,
};
use geomag_core::inverse::{
    recover_aggregate_f, reconstruct_multi, ReconstructOptions, ReconstructionResult,
};
use geomag_core::layerpot::{assemble_k_star, TriMesh};
use geomag_core::polarization::{analytic_ball_tensors, compute_tensors, AnomalyMaterial, Materials, TensorOptions};
use geomag_core::sphharm::{
    coupling_c, coupling_d, eval_a, eval_vector_harmonic, projected_cd, projection_matrices, sphere_quadrature, CouplingTables,
    SphDir, VectorHarmonicKind,
};
use geomag_core::{CVec3, Result, Vec3};
use nalgebra::Vector3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Quadrature level used for synthetic measurements (exactness 47).
const LEVEL: usize = 24;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    let ct: f64 = rng.random_range(-1.0..1.0);
    let ph: f64 = rng.random_range(0.0..2.0 * PI);
    let st = (1.0 - ct * ct).sqrt();
    Vector3::new(st * ph.cos(), st * ph.sin(), ct)
}

fn ball_anomaly(center: [f64; 3], alpha: f64, material: usize) -> Anomaly {
    Anomaly {
        center,
        shape: Shape::Ball,
        delta: 0.1,
        alpha,
        material,
    }
}

fn materials(n: usize) -> Materials {
    Materials {
        mu0: 1.0,
        eps0: 1.0,
        eps_shell: 1.5,
        omega: 1e-6,
        anomalies: vec![AnomalyMaterial { mu: 2.0, eps: 3.0, sigma: 1.0 }; n],
    }
}

fn scene(anomalies: Vec<Anomaly>, radius: f64) -> Scene {
    let n = anomalies.len();
    Scene {
        anomalies,
        materials: materials(n),
        background: BackgroundField::uniform([0.2, -0.3, 1.0]),
        radius,
    }
}

fn weights(s: &Scene) -> Result<Vec<DipoleWeight>> {
    dipole_weights(s, &scene_tensors(s, &TensorOptions::default())?)
}

fn synth(s: &Scene, epoch: Epoch, noise: f64, seed: u64) -> Result<VectorFieldSamples> {
    let w = weights(s)?;
    synthesize_measurement(s, &w, &sphere_quadrature(LEVEL)?, epoch, noise, seed)
}

/// Largest distance from each true center to its greedily matched recovered center.
fn match_errors(truth: &[Vec3], res: &ReconstructionResult) -> Vec<(usize, usize, f64)> {
    let mut cands = Vec::new();
    for (i, z) in truth.iter().enumerate() {
        for (j, a) in res.anomalies.iter().enumerate() {
            cands.push(((a.center() - z).norm(), i, j));
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut ui, mut uj) = (vec![false; truth.len()], vec![false; res.anomalies.len()]);
    let mut out = Vec::new();
    for (d, i, j) in cands {
        if !ui[i] && !uj[j] {
            ui[i] = true;
            uj[j] = true;
            out.push((i, j, d));
        }
    }
    out
}

fn criterion_1() -> Result<Outcome> {
    let t = Instant::now();
    let op = assemble_k_star(&TriMesh::icosphere(3)?)?;
    let ev = op.eigenvalues()?;
    let n1 = &ev[1..4];
    let n2 = &ev[4..9];
    let e1 = n1.iter().map(|e| (e - 1.0 / 6.0).norm()).fold(0.0, f64::max);
    let e2 = n2.iter().map(|e| (e - 0.1).norm()).fold(0.0, f64::max);
    let secs = t.elapsed().as_secs_f64();
    Ok(outcome(
        e1 <= 0.01 && e2 <= 0.02 && secs < 60.0,
        format!("n=1 cluster max dev {e1:.2e} (<= 0.01), n=2 {e2:.2e} (<= 0.02), top {:.6}, {secs:.1} s", ev[0].re),
    ))
}

fn criterion_2() -> Result<Outcome> {
    let t = Instant::now();
    let op = assemble_k_star(&TriMesh::icosphere(3)?)?;
    let sets = [
        ("high mu contrast", Materials::single(1.0, 1.0, 1.5, AnomalyMaterial { mu: 50.0, eps: 2.0, sigma: 0.0 })),
        ("sigma > 0 small omega", Materials::single(1.0, 1.0, 1.5, AnomalyMaterial { mu: 2.0, eps: 3.0, sigma: 1.0 })),
        ("moderate eps_s/eps0", Materials::single(1.0, 1.0, 4.0, AnomalyMaterial { mu: 3.0, eps: 2.0, sigma: 0.0 })),
    ];
    let opts = TensorOptions::default();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (name, m) in &sets {
        let bem = compute_tensors(&op, m, 0, &opts)?;
        let exact = analytic_ball_tensors(m, 0, &opts)?;
        let e = bem.max_relative_error(&exact);
        worst = worst.max(e);
        parts.push(format!("{name} {:.2}%", 100.0 * e));
    }
    let secs = t.elapsed().as_secs_f64();
    Ok(outcome(worst <= 0.02 && secs < 120.0, format!("{} (<= 2%), {secs:.1} s", parts.join(", "))))
}

fn criterion_3() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut log_ratios = Vec::new();
    for _ in 0..50 {
        let r: f64 = rng.random_range(1.0..10.0);
        let x = random_unit(&mut rng) * r;
        let z = random_unit(&mut rng) * (0.3 * r);
        let gd = grad_gamma0(&(x - z))?.map(Complex64::from);
        let hd = hessian_gamma0(&(x - z))?.map(Complex64::from);
        let eg = (kernel_multipole_grad(&x, &z, 25)? - gd).norm() / gd.norm();
        let eh = (kernel_multipole_hessian(&x, &z, 25)? - hd).norm() / hd.norm();
        worst = worst.max(eg).max(eh);
        // Truncation error against N, fitted as a geometric sequence over N = 6..16.
        let errs: Vec<f64> = (6..=16)
            .map(|n| kernel_multipole_hessian(&x, &z, n).map(|h| (h - hd).norm() / hd.norm()))
            .collect::<Result<_>>()?;
        log_ratios.push((errs[10].ln() - errs[0].ln()) / 10.0);
    }
    let ratio = (log_ratios.iter().sum::<f64>() / log_ratios.len() as f64).exp();
    Ok(outcome(
        worst <= 1e-8 && (ratio - 0.3).abs() <= 0.1,
        format!("max rel error at N=25 {worst:.2e} (<= 1e-8), observed decay ratio {ratio:.3} (|z|/R = 0.3)"),
    ))
}

fn criterion_4() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let quad = sphere_quadrature(8)?;
    let tables = CouplingTables::build(5, &quad)?;
    let mut printed: f64 = 0.0;
    let mut projected: f64 = 0.0;
    for _ in 0..100 {
        let dir = SphDir::new(random_unit(&mut rng))?;
        let xi = CVec3::from_fn(|_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        for n in 0..=3usize {
            for m in -(n as i64)..=(n as i64) {
                let lhs = eval_a(n, m, &dir)? * xi;
                let mut rp = lhs;
                let mut rq = lhs;
                let degrees = if n == 0 { vec![1] } else { vec![n - 1, n + 1] };
                for np in degrees {
                    for mp in -(np as i64)..=(np as i64) {
                        let nv = eval_vector_harmonic(VectorHarmonicKind::N, np, mp, &dir)?;
                        let (c, d) = projected_cd(np, mp, n, m, &quad)?;
                        rq -= nv * c.dot(&xi);
                        rp -= nv * coupling_c(np, mp, n, m, &tables)?.dot(&xi);
                        if np >= 1 {
                            let qv = eval_vector_harmonic(VectorHarmonicKind::Q, np, mp, &dir)?;
                            rq -= qv * d.dot(&xi);
                            rp -= qv * coupling_d(np, mp, n, m, &tables)?.dot(&xi);
                        }
                    }
                }
                let scale = lhs.norm().max(xi.norm());
                printed = printed.max(rp.norm() / scale);
                projected = projected.max(rq.norm() / scale);
            }
        }
    }
    Ok(outcome(
        printed <= 1e-9,
        format!("printed c, d: max residual {printed:.2e} (<= 1e-9); projected c, d: {projected:.2e}"),
    ))
}

fn criterion_5() -> Result<Outcome> {
    let delta = 0.1;
    let z = Vector3::new(0.6, -0.4, 0.5);
    let mut errs = Vec::new();
    let mut q_route = true;
    for k in [3.0, 6.0, 12.0, 24.0] {
        let s = scene(vec![ball_anomaly([z[0], z[1], z[2]], 0.2, 0)], k * z.norm());
        let w = weights(&s)?;
        let samples = synth(&s, Epoch::Delta, 0.0, 0)?;
        let proj = projection_matrices(&samples.quad)?;
        let f = recover_aggregate_f(&samples, &proj, delta)?;
        errs.push((f.f - w[0].w).norm() / w[0].w.norm());
        q_route &= f.f_q.is_some();
    }
    let xs: Vec<f64> = [3.0f64, 6.0, 12.0, 24.0].iter().map(|k| (1.0 / k).ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.max(f64::MIN_POSITIVE).ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let list: Vec<String> = errs.iter().map(|e| format!("{e:.1e}")).collect();
    Ok(outcome(
        (slope - 2.0).abs() <= 0.1 && q_route,
        format!(
            "relative F errors [{}] give slope {slope:.2} (want 2 +- 0.1); Q route {}",
            list.join(", "),
            if q_route { "available" } else { "unavailable (Q_0 projection matrix is zero)" }
        ),
    ))
}

fn criterion_6() -> Result<Outcome> {
    let t = Instant::now();
    let z = [0.5, -0.3, 0.8];
    let mut ez: f64 = 0.0;
    let mut ea: f64 = 0.0;
    let mut emu: f64 = 0.0;
    let mut emesh: f64 = 0.0;
    for alpha in [-0.2, 0.1, 0.3] {
        let s = scene(vec![ball_anomaly(z, alpha, 0)], 4.0);
        let sd = synth(&s, Epoch::Delta, 0.0, 0)?;
        let s0 = synth(&s, Epoch::Epoch0, 0.0, 0)?;
        let opts = ReconstructOptions {
            nmax: 3,
            prior: Some(s.clone()),
            ..Default::default()
        };
        let res = reconstruct_multi(&sd, Some(&s0), 1, 0.1, &opts)?;
        let a = &res.anomalies[0];
        ez = ez.max((a.center() - Vector3::from(z)).norm());
        ea = ea.max((a.alpha.unwrap_or(f64::NAN) - alpha).abs());
        emu = emu.max((a.mu.unwrap_or(f64::NAN) - 2.0).abs() / 2.0);
        if alpha == 0.1 {
            let mut mesh_prior = s.clone();
            mesh_prior.anomalies[0].shape = Shape::Icosphere(3);
            let opts = ReconstructOptions {
                prior: Some(mesh_prior),
                ..opts
            };
            let res = reconstruct_multi(&sd, Some(&s0), 1, 0.1, &opts)?;
            emesh = (res.anomalies[0].mu.unwrap_or(f64::NAN) - 2.0).abs() / 2.0;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    Ok(outcome(
        ez <= 1e-8 && ea <= 1e-8 && emu <= 1e-6 && emesh <= 0.02 && secs < 30.0,
        format!(
            "|dz| {ez:.1e} (<= 1e-8), |d alpha| {ea:.1e} (<= 1e-8), mu ball {emu:.1e} (<= 1e-6), mu mesh {:.2}% (<= 2%), {secs:.1} s",
            100.0 * emesh
        ),
    ))
}

fn multi_scene(n: usize) -> Scene {
    let all = [
        ball_anomaly([0.6, 0.0, 0.0], 0.2, 0),
        ball_anomaly([-0.5, 0.3, 0.2], -0.15, 1),
        ball_anomaly([0.1, -0.5, -0.4], 0.05, 2),
    ];
    let anomalies: Vec<Anomaly> = all[..n].to_vec();
    let rmax = anomalies.iter().map(|a| a.z().norm()).fold(0.0, f64::max);
    let mut s = scene(anomalies, 5.0 * rmax);
    s.materials.anomalies = vec![
        AnomalyMaterial { mu: 2.0, eps: 3.0, sigma: 1.0 },
        AnomalyMaterial { mu: 4.0, eps: 2.0, sigma: 1.0 },
        AnomalyMaterial { mu: 0.5, eps: 1.5, sigma: 1.0 },
    ][..n]
        .to_vec();
    s
}

fn criterion_7() -> Result<Outcome> {
    let t = Instant::now();
    let mut ez: f64 = 0.0;
    let mut ea: f64 = 0.0;
    let mut medians = Vec::new();
    for n in [2, 3] {
        let s = multi_scene(n);
        let truth: Vec<Vec3> = s.anomalies.iter().map(|a| a.z()).collect();
        let sd = synth(&s, Epoch::Delta, 0.0, 0)?;
        let s0 = synth(&s, Epoch::Epoch0, 0.0, 0)?;
        let opts = ReconstructOptions {
            nmax: n + 3,
            ..Default::default()
        };
        let res = reconstruct_multi(&sd, Some(&s0), n, 0.1, &opts)?;
        for (i, j, d) in match_errors(&truth, &res) {
            ez = ez.max(d);
            ea = ea.max((res.anomalies[j].alpha.unwrap_or(f64::NAN) - s.anomalies[i].alpha).abs());
        }
        let mut rel = Vec::new();
        for seed in 0..20u64 {
            let noisy = synth(&s, Epoch::Delta, 0.01, 1000 + seed)?;
            let res = reconstruct_multi(&noisy, None, n, 0.1, &opts)?;
            let worst = match_errors(&truth, &res)
                .iter()
                .map(|&(i, _, d)| d / truth[i].norm())
                .fold(0.0, f64::max);
            rel.push(worst);
        }
        rel.sort_by(f64::total_cmp);
        medians.push(0.5 * (rel[9] + rel[10]));
    }
    let secs = t.elapsed().as_secs_f64();
    let med = medians.iter().copied().fold(0.0, f64::max);
    Ok(outcome(
        ez <= 1e-6 && ea <= 1e-6 && med <= 0.05 && secs < 300.0,
        format!(
            "noise-free |dz| {ez:.1e}, |d alpha| {ea:.1e} (<= 1e-6); 1% noise median rel. position error {:.2}% / {:.2}% for 2 / 3 anomalies (<= 5%), {secs:.1} s",
            100.0 * medians[0],
            100.0 * medians[1]
        ),
    ))
}

fn criterion_8() -> Result<Outcome> {
    let window = scene(vec![ball_anomaly([0.5, 0.0, 0.0], 0.4, 0), ball_anomaly([-0.5, 0.0, 0.0], 0.1, 1)], 3.0);
    let collide = scene(vec![ball_anomaly([0.5, 0.0, 0.0], 0.1, 0), ball_anomaly([-0.5, 0.0, 0.0], -0.175, 1)], 3.0);
    let mut vanish = scene(vec![ball_anomaly([0.0, 0.0, 0.0], 0.1, 0)], 3.0);
    vanish.background = BackgroundField::Polynomial {
        linear: [0.0; 3],
        quadratic: [[0.0, 0.5, 0.0], [0.5, 0.0, 0.0], [0.0, 0.0, 0.0]],
    };
    let mut singular = scene(vec![ball_anomaly([0.2, 0.0, 0.0], 0.1, 0)], 3.0);
    let (mu, mu0, es, e0) = (5.0, 1.0, 2.0, 1.0);
    let gamma = (mu0 * es * es - mu * es * es) / (2.0 * (mu0 - mu) * es + 2.0 * (mu + 2.0 * mu0) * e0);
    singular.materials.eps_shell = es;
    singular.materials.anomalies[0] = AnomalyMaterial { mu, eps: gamma, sigma: 0.0 };
    let clean = scene(vec![ball_anomaly([0.5, 0.0, 0.0], 0.2, 0), ball_anomaly([-0.5, 0.0, 0.0], -0.15, 1)], 3.0);

    let checks = [
        ("alpha window", validate_scene(&window).has(CheckKind::AlphaWindow)),
        ("separability", validate_scene(&collide).has(CheckKind::Separability)),
        ("vanishing background", validate_scene(&vanish).has(CheckKind::BackgroundVanishing)),
        ("tensor singularity", validate_scene(&singular).has(CheckKind::TensorSingularity)),
        ("clean scene passes", validate_scene(&clean).is_valid()),
    ];
    let missed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    Ok(outcome(
        missed.is_empty(),
        if missed.is_empty() {
            "all four guards fire; admissible scene passes".to_string()
        } else {
            format!("missed: {}", missed.join(", "))
        },
    ))
}

fn criterion_9() -> Result<Outcome> {
    let s = multi_scene(3);
    let w = weights(&s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let h = 1e-4 * s.radius;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let x = random_unit(&mut rng) * s.radius * rng.random_range(1.0..2.0);
        let mut jac = nalgebra::Matrix3::<Complex64>::zeros();
        for k in 0..3 {
            let mut e = Vec3::zeros();
            e[k] = h;
            let d = (secular_variation(&s, &w, &(x + e))? - secular_variation(&s, &w, &(x - e))?)
                / Complex64::from(2.0 * h);
            jac.set_column(k, &d);
        }
        let scale = jac.norm();
        worst = worst.max(jac.trace().norm() / scale).max((jac - jac.transpose()).norm() / scale);
    }
    let samples = synth(&s, Epoch::Delta, 0.0, 0)?;
    let mut flux = Complex64::new(0.0, 0.0);
    for (node, v) in samples.quad.nodes().iter().zip(&samples.values) {
        flux += v.dot(&node.dir.vector().map(Complex64::from)) * node.weight;
    }
    // Mean normal component over the sphere, against the field RMS.
    let rel_flux = flux.norm() / (4.0 * PI) / samples.rms();
    Ok(outcome(
        worst <= 1e-6 && rel_flux <= 1e-10,
        format!("max |div| or |curl| / |grad| {worst:.1e} (<= 1e-6), net flux / RMS {rel_flux:.1e} (<= 1e-10)"),
    ))
}

fn simulate_and_reconstruct(dir: &std::path::Path) -> Result<(Vec<u8>, Vec<u8>, Vec<u8>)> {
    let s = multi_scene(2);
    let w = weights(&s)?;
    let quad = sphere_quadrature(LEVEL)?;
    let sd = synthesize_measurement(&s, &w, &quad, Epoch::Delta, 0.01, 7)?;
    let s0 = synthesize_measurement(&s, &w, &quad, Epoch::Epoch0, 0.01, 8)?;
    let pd = dir.join("run.delta.csv");
    let p0 = dir.join("run.epoch0.csv");
    sd.write(&pd)?;
    s0.write(&p0)?;
    let rd = VectorFieldSamples::read(&pd)?;
    let r0 = VectorFieldSamples::read(&p0)?;
    let opts = ReconstructOptions {
        prior: Some(s),
        ..Default::default()
    };
    let res = reconstruct_multi(&rd, Some(&r0), 2, 0.1, &opts)?;
    let json = serde_json::to_vec_pretty(&res)?;
    Ok((std::fs::read(&pd)?, std::fs::read(&p0)?, json))
}

fn criterion_10() -> Result<Outcome> {
    let a = tempfile::tempdir()?;
    let b = tempfile::tempdir()?;
    let ra = simulate_and_reconstruct(a.path())?;
    let rb = simulate_and_reconstruct(b.path())?;
    let stable = ra == rb;

    let s = multi_scene(2);
    let sd = synth(&s, Epoch::Delta, 0.01, 3)?;
    let p = a.path().join("roundtrip.csv");
    sd.write(&p)?;
    let back = VectorFieldSamples::read(&p)?;
    let mut csv_err: f64 = 0.0;
    for (x, y) in sd.values.iter().zip(&back.values) {
        csv_err = csv_err.max((x - y).norm() / x.norm().max(f64::MIN_POSITIVE));
    }
    for (x, y) in sd.quad.nodes().iter().zip(back.quad.nodes()) {
        csv_err = csv_err.max((x.dir.vector() - y.dir.vector()).norm()).max((x.weight - y.weight).abs());
    }
    let res: ReconstructionResult = serde_json::from_slice(&ra.2)?;
    let again = serde_json::to_vec_pretty(&res)?;
    let scene_back: Scene = serde_json::from_str(&serde_json::to_string(&s)?)?;
    let json_ok = again == ra.2 && scene_back == s;
    Ok(outcome(
        stable && csv_err <= 1e-15 && json_ok,
        format!(
            "byte-identical reruns: {stable}; CSV round-trip max rel. error {csv_err:.1e} (<= 1e-15); JSON round-trip exact: {json_ok}"
        ),
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Result<Outcome>); 10] = [
        ("NP spectrum on the icosphere", criterion_1),
        ("ball polarization tensors, BEM vs closed form", criterion_2),
        ("kernel multipole expansions", criterion_3),
        ("decomposition identity", criterion_4),
        ("aggregate weight convergence", criterion_5),
        ("single-anomaly round trip", criterion_6),
        ("multi-anomaly round trip", criterion_7),
        ("hypothesis guards", criterion_8),
        ("conservation", criterion_9),
        ("determinism and format stability", criterion_10),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let o = f().unwrap_or_else(|e| outcome(false, format!("error: {e}")));
        if !o.pass {
            failed += 1;
        }
        println!("criterion {:>2} {}: {}: {}", k + 1, if o.pass { "PASS" } else { "FAIL" }, name, o.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 && std::env::var("GEOMAG_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
