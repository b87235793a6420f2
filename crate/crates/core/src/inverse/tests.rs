use std::f64::consts::PI;

use nalgebra::{Rotation3, Vector3};
use num_complex::Complex64;

use super::*;
use crate::forward::{
    dipole_weights, scene_tensors, synthesize_measurement, Anomaly, BackgroundField, Epoch, SampleMeta, Scene, Shape,
    VectorFieldSamples,
};
use crate::layerpot::{assemble_k_star, TriMesh};
use crate::polarization::{compute_tensors, AnomalyMaterial, Materials, TensorOptions};
use crate::sphharm::{level_for_exactness, projection_matrices, sphere_quadrature, Derivs, SphericalTable};
use crate::{CVec3, GeomagError, Vec3};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn cv(a: [f64; 3]) -> CVec3 {
    Vector3::from(a).map(Complex64::from)
}

/// Noise-free point-dipole samples with scaled weights `W = delta^3 w`.
/// Off-center sources are not band-limited, so `level` must be high enough to
/// keep aliasing out of the low moments.
fn dipole_samples(centers: &[Vec3], weights: &[CVec3], radius: f64, level: usize) -> VectorFieldSamples {
    let quad = sphere_quadrature(level).unwrap();
    let values = quad
        .nodes()
        .iter()
        .map(|n| dipole_model_field(centers, weights, &(n.dir.vector() * radius)).unwrap())
        .collect();
    let meta = SampleMeta {
        radius,
        epoch: Epoch::Delta,
        noise_rel: 0.0,
        seed: 0,
        quad_level: quad.level(),
        exactness: quad.exactness(),
        scene_hash: String::new(),
    };
    VectorFieldSamples::new(quad, values, meta).unwrap()
}

fn ball_materials(n: usize) -> Materials {
    Materials {
        mu0: 1.0,
        eps0: 1.0,
        eps_shell: 1.5,
        omega: 1e-6,
        anomalies: vec![AnomalyMaterial { mu: 2.0, eps: 3.0, sigma: 1.0 }; n],
    }
}

#[test]
fn n2_injection_gives_its_norm() {
    let quad = sphere_quadrature(6).unwrap();
    let values = quad
        .nodes()
        .iter()
        .map(|n| SphericalTable::new(&n.dir, 1, Derivs::Gradient).n_vec(1, 0))
        .collect();
    let meta = SampleMeta {
        radius: 1.0,
        epoch: Epoch::Delta,
        noise_rel: 0.0,
        seed: 0,
        quad_level: quad.level(),
        exactness: quad.exactness(),
        scene_hash: String::new(),
    };
    let s = VectorFieldSamples::new(quad, values, meta).unwrap();
    let p = project_vector_harmonic(&s, ProjectionKind::N2).unwrap();
    assert!((p - cv([0.0, 6.0, 0.0])).norm() < 1e-12, "{p}");
    let q = project_vector_harmonic(&s, ProjectionKind::Q0).unwrap();
    assert!(q.norm() < 1e-12);

    let zero = s.scaled(c(0.0, 0.0));
    assert_eq!(project_vector_harmonic(&zero, ProjectionKind::N2).unwrap(), CVec3::zeros());
}

#[test]
fn partial_coverage_is_rejected() {
    let mut s = dipole_samples(&[Vec3::zeros()], &[cv([1.0, 0.0, 0.0])], 3.0, 6);
    let keep = s.len() / 2;
    let mut nodes = s.quad.nodes().to_vec();
    nodes.truncate(keep);
    s.quad = crate::sphharm::QuadRule::from_nodes(nodes, s.quad.exactness(), s.quad.level());
    s.values.truncate(keep);
    assert!(matches!(
        project_vector_harmonic(&s, ProjectionKind::N2),
        Err(GeomagError::Coverage(_))
    ));
    assert!(matches!(extract_moments(&s, 2), Err(GeomagError::Coverage(_))));
}

#[test]
fn centered_anomaly_projection_and_aggregate() {
    let (delta, r) = (0.1, 4.0);
    let w = CVec3::new(c(0.3, 0.1), c(-1.2, 0.0), c(0.7, -0.4));
    let d3 = Complex64::from(delta * delta * delta);
    let s = dipole_samples(&[Vec3::zeros()], &[w * d3], r, 6);
    let proj = projection_matrices(&s.quad).unwrap();
    let got = project_vector_harmonic(&s, ProjectionKind::N2).unwrap();
    let want = proj.c * w * (d3 / (2.0 * PI.sqrt() * r.powi(3)));
    assert!((got - want).norm() <= 1e-12 * want.norm(), "{got} vs {want}");

    let f = recover_aggregate_f(&s, &proj, delta).unwrap();
    assert!((f.f - w).norm() <= 1e-10 * w.norm());
    // The Q_0 projections of exterior fields vanish, so that route is unavailable.
    assert!(f.f_q.is_none());
    assert!(!f.warnings.is_empty());
}

#[test]
fn aggregate_is_exact_off_center_and_cancels() {
    let delta: f64 = 0.1;
    let d3 = Complex64::from(delta * delta * delta);
    let w1 = cv([0.4, -0.2, 1.0]);
    let w2 = cv([-0.5, 0.6, 0.1]);
    let zs = [Vector3::new(0.5, 0.2, -0.3), Vector3::new(-0.4, 0.1, 0.6)];
    let s = dipole_samples(&zs, &[w1 * d3, w2 * d3], 3.0, 24);
    let proj = projection_matrices(&s.quad).unwrap();
    let f = recover_aggregate_f(&s, &proj, delta).unwrap();
    // Degree-one harmonics have constant gradients: no (|z|/R)^2 error at all.
    assert!((f.f - (w1 + w2)).norm() <= 1e-10 * (w1 + w2).norm());

    let s = dipole_samples(&[zs[0], -zs[0]], &[w1 * d3, -w1 * d3], 3.0, 24);
    assert!(s.rms() > 0.0);
    let f = recover_aggregate_f(&s, &proj, delta).unwrap();
    assert!(f.f.norm() <= 1e-12 * w1.norm());
}

#[test]
fn moments_reality_and_monopole() {
    let zs = [Vector3::new(0.5, -0.3, 0.8), Vector3::new(-0.2, 0.4, 0.1)];
    let ws = [cv([1.0, 0.5, -0.2]), cv([0.1, -0.7, 0.3])];
    let s = dipole_samples(&zs, &ws, 4.0, 24);
    let m = extract_moments(&s, 5).unwrap();
    assert!(m.get(0, 0).norm() <= 1e-12 * m.scale);
    for n in 1..=5usize {
        for mm in 0..=(n as i64) {
            let sign = if mm % 2 == 0 { 1.0 } else { -1.0 };
            let d = m.get(n, -mm) - m.get(n, mm).conj() * sign;
            assert!(d.norm() <= 1e-12 * m.scale, "n={n} m={mm}: {d}");
        }
    }
}

#[test]
fn degree_one_moments_do_not_depend_on_position() {
    let w = cv([0.2, 1.0, -0.6]);
    let a = extract_moments(&dipole_samples(&[Vector3::new(0.1, 0.2, 0.3)], &[w], 3.0, 24), 2).unwrap();
    let b = extract_moments(&dipole_samples(&[Vector3::new(-0.6, 0.4, 0.0)], &[w], 3.0, 24), 2).unwrap();
    for m in -1..=1 {
        assert!((a.get(1, m) - b.get(1, m)).norm() <= 1e-12 * a.scale);
    }
}

#[test]
fn moment_model_reproduces_field() {
    let z = Vector3::new(0.3, -0.4, 0.6);
    let r = z.norm() / 0.3;
    let w = cv([0.5, -1.0, 0.25]);
    let nmax = 24;
    let s = dipole_samples(&[z], &[w], r, level_for_exactness(2 * (nmax + 1)));
    let m = extract_moments(&s, nmax).unwrap();
    for x in [Vector3::new(1.3, 0.7, -0.4), Vector3::new(-0.2, -1.1, 1.5), Vector3::new(0.0, 0.0, -2.0)] {
        let x = x.normalize() * r * 1.2;
        let want = dipole_model_field(&[z], &[w], &x).unwrap();
        let got = m.eval(&x).unwrap();
        assert!((got - want).norm() <= 1e-9 * want.norm(), "{}", (got - want).norm() / want.norm());
    }
    let with_d = m.with_vector_moments(&[z], &[w]);
    let d = with_d.d.unwrap();
    assert!((d[crate::sphharm::lm_index(0, 0)] - w / c(2.0 * PI.sqrt(), 0.0)).norm() < 1e-14);
}

#[test]
fn extraction_needs_enough_exactness() {
    let s = dipole_samples(&[Vec3::zeros()], &[cv([1.0, 0.0, 0.0])], 3.0, 4);
    assert!(matches!(extract_moments(&s, 5), Err(GeomagError::Precision { .. })));
}

#[test]
fn locate_single_examples() {
    let delta: f64 = 0.1;
    let d3 = Complex64::from(delta.powi(3));
    let z = Vector3::new(0.5, -0.3, 0.8);
    let w = CVec3::new(c(0.3, -0.2), c(1.0, 0.5), c(-0.4, 0.0));
    let s = dipole_samples(&[z], &[w * d3], 4.0, 20);
    let m = extract_moments(&s, 3).unwrap();
    let (zh, wh) = locate_single(&m, delta).unwrap();
    assert!((zh - z).norm() <= 1e-8, "{}", (zh - z).norm());
    assert!((wh - w).norm() <= 1e-10 * w.norm());

    // Complex rescaling of the samples leaves the location alone.
    let k = c(-3.0, 7.0);
    let (zk, wk) = locate_single(&extract_moments(&s.scaled(k), 3).unwrap(), delta).unwrap();
    assert!((zk - zh).norm() <= 1e-12);
    assert!((wk - wh * k).norm() <= 1e-10 * wk.norm());

    let s0 = dipole_samples(&[Vec3::zeros()], &[w * d3], 4.0, 5);
    let (z0, _) = locate_single(&extract_moments(&s0, 3).unwrap(), delta).unwrap();
    assert!(z0.norm() <= 1e-12);

    let empty = s.scaled(c(0.0, 0.0));
    assert!(matches!(
        locate_single(&extract_moments(&empty, 3).unwrap(), delta),
        Err(GeomagError::ZeroWeight)
    ));
}

#[test]
fn locate_single_is_rotation_equivariant() {
    let z = Vector3::new(0.4, 0.1, -0.5);
    let w = cv([0.2, -0.9, 0.4]);
    let q = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vector3::new(1.0, 2.0, -0.5)), 0.83);
    let qc = q.matrix().map(Complex64::from);
    let a = locate_single(&extract_moments(&dipole_samples(&[z], &[w], 3.0, 20), 3).unwrap(), 1.0).unwrap();
    let b = locate_single(&extract_moments(&dipole_samples(&[q * z], &[qc * w], 3.0, 20), 3).unwrap(), 1.0).unwrap();
    assert!((b.0 - q * a.0).norm() <= 1e-9);
    assert!((b.1 - qc * a.1).norm() <= 1e-9 * w.norm());
}

#[test]
fn alpha_examples() {
    let v = CVec3::new(c(1.0, 0.2), c(-0.5, 0.0), c(0.3, -0.1));
    assert_eq!(recover_alpha(&CVec3::zeros(), &v, 0.1).unwrap(), 0.0);
    let a = recover_alpha(&(v * c(0.1f64.powf(0.6) - 1.0, 0.0)), &v, 0.1).unwrap();
    assert!((a - 0.2).abs() <= 1e-12);
    let rho = -0.74881;
    let a = recover_alpha(&(v * c(rho, 0.0)), &v, 0.1).unwrap();
    assert!((a - 0.2).abs() <= 1e-5, "{a}");
    let rho = 10f64.powf(0.9) - 1.0;
    let a = recover_alpha(&(v * c(rho, 0.0)), &v, 0.1).unwrap();
    assert!((a + 0.3).abs() <= 1e-12);

    let skew = v + CVec3::new(c(0.0, 0.0), c(0.0, 0.0), c(0.5, 0.0));
    assert!(matches!(recover_alpha(&skew, &v, 0.1), Err(GeomagError::InconsistentEpochs(_))));
    assert!(matches!(recover_alpha(&(v * c(1.0, 1.0)), &v, 0.1), Err(GeomagError::InconsistentEpochs(_))));
    assert!(matches!(recover_alpha(&(v * c(-1.5, 0.0)), &v, 0.1), Err(GeomagError::Domain(_))));
}

#[test]
fn alpha_inverts_dipole_weights() {
    for &delta in &[0.05, 0.1] {
        for &alpha in &[-0.2, -0.1, 0.1, 0.3] {
            let scene = Scene {
                anomalies: vec![Anomaly {
                    center: [0.1, 0.2, -0.1],
                    shape: Shape::Ball,
                    delta,
                    alpha,
                    material: 0,
                }],
                materials: ball_materials(1),
                background: BackgroundField::uniform([0.3, -0.2, 1.0]),
                radius: 3.0,
            };
            let dw = dipole_weights(&scene, &scene_tensors(&scene, &TensorOptions::default()).unwrap()).unwrap();
            let a = recover_alpha(&dw[0].w, &dw[0].v, delta).unwrap();
            assert!((a - alpha).abs() <= 1e-10, "{a} vs {alpha}");
        }
    }
}

#[test]
fn ball_mu_round_trip() {
    let mats = ball_materials(1);
    let h0 = Vector3::new(0.2, -0.4, 1.0);
    for &mu in &[0.05, 0.5, 2.0, 40.0] {
        let p = ball_p_of_mu(mu, &mats, 0).unwrap();
        let v = h0.map(Complex64::from) * p;
        let got = recover_mu(&v, &h0, &mats, 0, MuShape::Ball).unwrap();
        assert!((got - mu).abs() <= 1e-10 * mu, "{got} vs {mu}");
    }
    // Symmetric average around mu0 lands on the zero-contrast value to second order.
    let p = (ball_p_of_mu(mats.mu0 * (1.0 - 1e-6), &mats, 0).unwrap() + ball_p_of_mu(mats.mu0 * (1.0 + 1e-6), &mats, 0).unwrap()) * 0.5;
    assert!(matches!(
        recover_mu(&(h0.map(Complex64::from) * p), &h0, &mats, 0, MuShape::Ball),
        Err(GeomagError::OutOfRange(_))
    ));
    let v = cv([1.0, 0.0, 0.0]);
    assert!(matches!(
        recover_mu(&v, &h0, &mats, 0, MuShape::Ball),
        Err(GeomagError::AnisotropyMismatch(_))
    ));
    // mu0 M is at most K / 2: far beyond that nothing matches.
    let huge = ball_p_of_mu(1e-9, &mats, 0).unwrap() * 10.0;
    assert!(matches!(
        recover_mu(&(h0.map(Complex64::from) * huge), &h0, &mats, 0, MuShape::Ball),
        Err(GeomagError::OutOfRange(_))
    ));
}

#[test]
fn ball_p_is_monotone_in_mu() {
    let mats = ball_materials(1);
    let ps: Vec<f64> = (0..60)
        .map(|k| ball_p_of_mu(1e-3 * 1.25f64.powi(k), &mats, 0).unwrap().re)
        .collect();
    let s = (ps[1] - ps[0]).signum();
    assert!(ps.windows(2).all(|w| (w[1] - w[0]).signum() == s));
}

#[test]
fn mesh_mu_round_trip() {
    let mesh = TriMesh::icosphere(2).unwrap();
    let op = assemble_k_star(&mesh).unwrap();
    let mut mats = ball_materials(1);
    mats.anomalies[0].mu = 3.0;
    let t = compute_tensors(&op, &mats, 0, &TensorOptions::default()).unwrap();
    let h0 = Vector3::new(0.3, 0.5, -1.0);
    let v = t.p * h0.map(Complex64::from);
    let got = recover_mu(&v, &h0, &mats, 0, MuShape::Mesh(&op)).unwrap();
    assert!((got - 3.0).abs() <= 1e-8 * 3.0, "{got}");
}

#[test]
fn single_anomaly_fit_matches_locate_single() {
    let delta: f64 = 0.1;
    let d3 = Complex64::from(delta.powi(3));
    let z = Vector3::new(0.5, -0.3, 0.8);
    let w = cv([0.3, 1.0, -0.4]);
    let s = dipole_samples(&[z], &[w * d3], 4.0, 20);
    let (zl, _) = locate_single(&extract_moments(&s, 3).unwrap(), delta).unwrap();
    let opts = ReconstructOptions {
        nmax: 3,
        starts: 4,
        ..Default::default()
    };
    let res = reconstruct_multi(&s, None, 1, delta, &opts).unwrap();
    assert!(res.diagnostics.converged);
    assert!((res.anomalies[0].center() - zl).norm() <= 1e-10);
    assert!(res.anomalies[0].alpha.is_none());
    assert!(res.warnings.iter().any(|m| m.contains("epoch-0 data required")));
    assert!(res.relative_residual <= 1e-10);
}

#[test]
fn two_anomaly_round_trip() {
    let delta: f64 = 0.1;
    let d3 = Complex64::from(delta.powi(3));
    let zs = [Vector3::new(0.6, 0.0, 0.0), Vector3::new(-0.5, 0.3, 0.2)];
    let (a1, a2) = (0.2, -0.15);
    let v = [cv([0.2, -0.1, 1.0]), cv([-0.3, 0.4, 0.8])];
    let w = [v[0] * c(delta.powf(3.0 * a1) - 1.0, 0.0), v[1] * c(delta.powf(3.0 * a2) - 1.0, 0.0)];
    let r = 5.0 * 0.6;
    let level = 24;
    let sd = dipole_samples(&zs, &[w[0] * d3, w[1] * d3], r, level);
    let s0 = dipole_samples(&zs, &[v[0] * d3, v[1] * d3], r, level);
    let res = reconstruct_multi(&sd, Some(&s0), 2, delta, &ReconstructOptions::default()).unwrap();
    assert!(res.diagnostics.converged);
    for (k, z) in zs.iter().enumerate() {
        let a = res
            .anomalies
            .iter()
            .min_by(|p, q| (p.center() - z).norm().total_cmp(&(q.center() - z).norm()))
            .unwrap();
        assert!((a.center() - z).norm() <= 1e-6, "{k}: {:?}", a.z);
        let want = if k == 0 { a1 } else { a2 };
        assert!((a.alpha.unwrap() - want).abs() <= 1e-6);
    }
    assert!(res.diagnostics.separability_gap.unwrap() > 0.1);
}

#[test]
fn overparameterized_fit_leaves_a_ghost() {
    let delta: f64 = 0.1;
    let d3 = Complex64::from(delta.powi(3));
    let z = Vector3::new(0.3, -0.2, 0.4);
    let w = cv([0.7, 0.1, -0.5]);
    let s = dipole_samples(&[z], &[w * d3], 2.5, 24);
    let opts = ReconstructOptions {
        nmax: 4,
        starts: 8,
        ..Default::default()
    };
    let res = reconstruct_multi(&s, None, 2, delta, &opts).unwrap();
    let mut norms: Vec<f64> = res.anomalies.iter().map(|a| a.w().norm()).collect();
    norms.sort_by(f64::total_cmp);
    assert!(norms[0] <= 1e-6 * norms[1], "{norms:?}");
    assert!(res.anomalies.iter().any(|a| a.diagnostics.ghost));
    assert!(res.warnings.iter().any(|m| m.contains("identifiability")));
    let live = res.anomalies.iter().find(|a| !a.diagnostics.ghost).unwrap();
    assert!((live.center() - z).norm() <= 1e-8);
}

#[test]
fn scene_round_trip_recovers_alpha_and_mu() {
    let scene = Scene {
        anomalies: vec![Anomaly {
            center: [0.3, -0.2, 0.5],
            shape: Shape::Ball,
            delta: 0.1,
            alpha: 0.1,
            material: 0,
        }],
        materials: ball_materials(1),
        background: BackgroundField::uniform([0.1, 0.4, -1.0]),
        radius: 3.0,
    };
    let dw = dipole_weights(&scene, &scene_tensors(&scene, &TensorOptions::default()).unwrap()).unwrap();
    let quad = sphere_quadrature(20).unwrap();
    let sd = synthesize_measurement(&scene, &dw, &quad, Epoch::Delta, 0.0, 1).unwrap();
    let s0 = synthesize_measurement(&scene, &dw, &quad, Epoch::Epoch0, 0.0, 1).unwrap();
    let opts = ReconstructOptions {
        nmax: 3,
        starts: 4,
        prior: Some(scene.clone()),
        ..Default::default()
    };
    let res = reconstruct_multi(&sd, Some(&s0), 1, 0.1, &opts).unwrap();
    let a = &res.anomalies[0];
    assert!((a.center() - scene.anomalies[0].z()).norm() <= 1e-8);
    assert!((a.alpha.unwrap() - 0.1).abs() <= 1e-8);
    assert!((a.mu.unwrap() - 2.0).abs() <= 1e-6 * 2.0);
}

#[test]
fn bad_requests_are_rejected() {
    let s = dipole_samples(&[Vec3::zeros()], &[cv([1.0, 0.0, 0.0])], 3.0, 4);
    let opts = ReconstructOptions {
        nmax: 3,
        ..Default::default()
    };
    assert!(reconstruct_multi(&s, None, 0, 0.1, &opts).is_err());
    assert!(reconstruct_multi(&s, None, 2, 0.1, &opts).is_err());
    assert!(reconstruct_multi(&s, None, 1, 1.5, &opts).is_err());
}
