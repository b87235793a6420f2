//! `geomag`: batch front end for the secular-variation forward model and inversion.

mod checks;
mod config;
mod error;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use geomag_core::forward::{
    dipole_weights, scene_tensors, synthesize_measurement, validate_scene, Epoch, VectorFieldSamples,
};
use geomag_core::inverse::{reconstruct_multi, ReconstructOptions};
use geomag_core::layerpot::{assemble_k_star, TriMesh};
use geomag_core::polarization::{
    analytic_ball_tensors, check_nonsingular, compute_tensors, lambda_params_with, AnomalyMaterial, DSign,
    LambdaEpsForm, Materials, PolarizationSet, TensorOptions, DEFAULT_OMEGA,
};
use geomag_core::sphharm::sphere_quadrature;
use geomag_core::CMat3;
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::manifest::ManifestBuilder;

#[derive(Parser)]
#[command(name = "geomag", version, about = "Geomagnetic secular variation from growing anomalies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize epoch-difference (and epoch-0) samples from a scenario file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output prefix; files are written as `<prefix>.delta.csv` and so on.
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover anomaly centers, weights, exponents and permeabilities.
    Reconstruct {
        #[arg(long)]
        delta: PathBuf,
        #[arg(long)]
        epoch0: Option<PathBuf>,
        /// Number of anomalies to fit.
        #[arg(long)]
        l0: usize,
        /// Anomaly scale delta in (0, 1).
        #[arg(long = "delta-scale")]
        delta_scale: f64,
        #[arg(long, default_value_t = 5)]
        nmax: usize,
        #[arg(long)]
        out: PathBuf,
        /// Scenario file supplying background field and materials for mu recovery.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 32)]
        starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        max_iterations: usize,
    },
    /// Polarization tensors of a single anomaly.
    Tensors(TensorArgs),
    /// Run the invariant suite.
    Validate {
        #[arg(long, value_enum, default_value_t = checks::Level::Fast)]
        level: checks::Level,
        #[arg(long, default_value = "geomag-validate.manifest.json")]
        manifest: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SignArg {
    Plus,
    Minus,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LambdaArg {
    Corrected,
    Printed,
}

#[derive(clap::Args)]
struct TensorArgs {
    /// `ball`, `icosphere`, or a path to an OFF mesh.
    #[arg(long)]
    shape: String,
    /// Icosphere refinement; for a ball, the refinement of the BEM comparison (default 3).
    #[arg(long)]
    refinement: Option<usize>,
    #[arg(long)]
    mu: f64,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long = "eps-shell")]
    eps_shell: f64,
    #[arg(long, default_value_t = 1.0)]
    mu0: f64,
    #[arg(long, default_value_t = 1.0)]
    eps0: f64,
    #[arg(long, default_value_t = DEFAULT_OMEGA)]
    omega: f64,
    #[arg(long = "d-sign", value_enum, default_value_t = SignArg::Plus)]
    d_sign: SignArg,
    #[arg(long = "lambda-eps", value_enum, default_value_t = LambdaArg::Corrected)]
    lambda_eps: LambdaArg,
    #[arg(long)]
    out: PathBuf,
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn simulate(config: &Path, out: &Path, mf: &mut ManifestBuilder) -> CliResult<i32> {
    let loaded = config::load(config)?;
    mf.config_hash(loaded.hash.clone());
    mf.input(&loaded.path)?;
    let scene = &loaded.scene;
    let report = validate_scene(scene);
    for w in &report.warnings {
        mf.warn(w.to_string());
    }
    if !report.is_valid() {
        eprint!("scene validation failed\n{report}");
        for v in &report.violations {
            mf.warn(v.to_string());
        }
        return Err(CliError::Validation(
            report.violations.iter().map(|v| v.message.clone()).collect::<Vec<_>>().join("; "),
        ));
    }
    let m = &loaded.config.measurement;
    let weights = dipole_weights(scene, &scene_tensors(scene, &Default::default())?)?;
    let quad = sphere_quadrature(m.quad_level)?;

    let mut epochs = vec![(Epoch::Delta, "delta", m.seed)];
    if m.epoch0 {
        epochs.push((Epoch::Epoch0, "epoch0", m.seed.wrapping_add(1)));
    }
    for (epoch, name, seed) in epochs {
        let samples = synthesize_measurement(scene, &weights, &quad, epoch, m.noise, seed)?;
        let csv = with_suffix(out, &format!(".{name}.csv"));
        let sidecar = samples.write(&csv)?;
        mf.output(&csv)?;
        mf.output(&sidecar)?;
    }
    let scene_path = with_suffix(out, ".scene.json");
    write_json(&scene_path, scene)?;
    mf.output(&scene_path)?;
    eprintln!("wrote {} samples per epoch to {}.*", quad.len(), out.display());
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn reconstruct(
    delta: &Path,
    epoch0: Option<&Path>,
    l0: usize,
    delta_scale: f64,
    opts: ReconstructOptions,
    config: Option<&Path>,
    out: &Path,
    mf: &mut ManifestBuilder,
) -> CliResult<i32> {
    let mut opts = opts;
    if let Some(c) = config {
        let loaded = config::load(c)?;
        mf.config_hash(loaded.hash.clone());
        mf.input(&loaded.path)?;
        opts.prior = Some(loaded.scene);
    }
    let sd = VectorFieldSamples::read(delta)?;
    mf.input(delta)?;
    let s0 = match epoch0 {
        Some(p) => {
            let s = VectorFieldSamples::read(p)?;
            mf.input(p)?;
            Some(s)
        }
        None => None,
    };
    let res = reconstruct_multi(&sd, s0.as_ref(), l0, delta_scale, &opts)?;
    for w in &res.warnings {
        eprintln!("warning: {w}");
        mf.warn(w.clone());
    }
    write_json(out, &res)?;
    mf.output(out)?;
    if !res.diagnostics.converged {
        return Err(CliError::Numeric(format!(
            "optimizer did not converge after {} iterations; best result written to {}",
            res.diagnostics.iterations,
            out.display()
        )));
    }
    for (l, a) in res.anomalies.iter().enumerate() {
        eprintln!(
            "anomaly {l}: z = [{:.6}, {:.6}, {:.6}], alpha = {}, mu = {}",
            a.z[0],
            a.z[1],
            a.z[2],
            a.alpha.map_or("null".into(), |v| format!("{v:.6}")),
            a.mu.map_or("null".into(), |v| format!("{v:.6}")),
        );
    }
    Ok(0)
}

fn split(m: &CMat3) -> serde_json::Value {
    let part = |f: fn(&num_complex::Complex64) -> f64| -> Vec<Vec<f64>> {
        (0..3).map(|i| (0..3).map(|j| f(&m[(i, j)])).collect()).collect()
    };
    json!({ "re": part(|c| c.re), "im": part(|c| c.im) })
}

fn tensor_json(t: &PolarizationSet) -> serde_json::Value {
    json!({ "p0": split(&t.p0), "d": split(&t.d), "m": split(&t.m), "p": split(&t.p) })
}

fn tensors(a: &TensorArgs, mf: &mut ManifestBuilder) -> CliResult<i32> {
    let materials = Materials {
        mu0: a.mu0,
        eps0: a.eps0,
        eps_shell: a.eps_shell,
        omega: a.omega,
        anomalies: vec![AnomalyMaterial { mu: a.mu, eps: a.eps, sigma: a.sigma }],
    };
    let opts = TensorOptions {
        d_sign: match a.d_sign {
            SignArg::Plus => DSign::Plus,
            SignArg::Minus => DSign::Minus,
        },
        lambda_eps: match a.lambda_eps {
            LambdaArg::Corrected => LambdaEpsForm::Corrected,
            LambdaArg::Printed => LambdaEpsForm::Printed,
        },
    };
    let lambda = lambda_params_with(&materials, 0, opts.lambda_eps)?;
    let nonsingular = check_nonsingular(&materials, 0)?;

    let (shape, refinement, mesh) = match a.shape.as_str() {
        "ball" => ("ball".to_string(), a.refinement.unwrap_or(3), None),
        "icosphere" => {
            let r = a.refinement.unwrap_or(3);
            ("icosphere".to_string(), r, Some(TriMesh::icosphere(r)?))
        }
        path => {
            if a.refinement.is_some() {
                return Err(CliError::Input(format!(
                    "--refinement applies to ball and icosphere shapes only; mesh file {path} has a fixed triangulation"
                )));
            }
            let p = Path::new(path);
            let mesh = TriMesh::load_off(p)?;
            mf.input(p)?;
            (path.to_string(), 0, Some(mesh))
        }
    };

    let mut report = json!({
        "shape": shape,
        "materials": materials,
        "options": opts,
        "lambda": lambda,
        "nonsingular": nonsingular,
    });
    let primary = match &mesh {
        None => {
            let exact = analytic_ball_tensors(&materials, 0, &opts)?;
            let bem = compute_tensors(&assemble_k_star(&TriMesh::icosphere(refinement)?)?, &materials, 0, &opts)?;
            let err = bem.max_relative_error(&exact);
            report["comparison"] = json!({
                "refinement": refinement,
                "panels": 20 * 4usize.pow(refinement as u32),
                "bem": tensor_json(&bem),
                "max_relative_error": err,
            });
            eprintln!("BEM vs analytic (refinement {refinement}): max relative error {:.3}%", 100.0 * err);
            exact
        }
        Some(mesh) => {
            report["refinement"] = json!(refinement);
            report["panels"] = json!(mesh.len());
            compute_tensors(&assemble_k_star(mesh)?, &materials, 0, &opts)?
        }
    };
    let identity = primary.m * num_complex::Complex64::from(materials.mu0) - primary.p0;
    report["tensors"] = tensor_json(&primary);
    report["norms"] = json!({
        "p0": primary.p0.norm(),
        "d": primary.d.norm(),
        "m": primary.m.norm(),
        "p": primary.p.norm(),
        "p_minus_mu0_m_plus_p0": (primary.p - identity).norm(),
    });
    if !nonsingular.nonsingular {
        mf.warn("nonsingularity condition fails for these materials");
    }
    write_json(&a.out, &report)?;
    mf.output(&a.out)?;
    eprintln!(
        "|P0| = {:.6e}, |D| = {:.6e}, |M| = {:.6e}, |P| = {:.6e}, |P - (mu0 M - P0)| = {:.3e}",
        primary.p0.norm(),
        primary.d.norm(),
        primary.m.norm(),
        primary.p.norm(),
        (primary.p - identity).norm()
    );
    Ok(0)
}

fn validate(level: checks::Level, mf: &mut ManifestBuilder) -> CliResult<i32> {
    let rows = checks::run(level);
    checks::print_table(&rows);
    for r in rows.iter().filter(|r| !r.pass) {
        mf.warn(format!("{}: {}: observed {}, expected {}", r.module, r.invariant, r.observed, r.expected));
    }
    Ok(if rows.iter().all(|r| r.pass) { 0 } else { 2 })
}

fn configure_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var("GEOMAG_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| CliError::Input(format!("GEOMAG_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, manifest_path) = match &cli.command {
        Command::Simulate { out, .. } => ("simulate", with_suffix(out, ".manifest.json")),
        Command::Reconstruct { out, .. } => ("reconstruct", out.with_extension("manifest.json")),
        Command::Tensors(a) => ("tensors", a.out.with_extension("manifest.json")),
        Command::Validate { manifest, .. } => ("validate", manifest.clone()),
    };
    let mut mf = ManifestBuilder::new(name);
    let outcome = configure_threads().and_then(|_| match &cli.command {
        Command::Simulate { config, out } => simulate(config, out, &mut mf),
        Command::Reconstruct { delta, epoch0, l0, delta_scale, nmax, out, config, starts, seed, max_iterations } => {
            let opts = ReconstructOptions {
                nmax: *nmax,
                starts: *starts,
                seed: *seed,
                max_iterations: *max_iterations,
                ..Default::default()
            };
            reconstruct(delta, epoch0.as_deref(), *l0, *delta_scale, opts, config.as_deref(), out, &mut mf)
        }
        Command::Tensors(a) => tensors(a, &mut mf),
        Command::Validate { level, .. } => validate(*level, &mut mf),
    });
    let (code, message) = match outcome {
        Ok(c) => (c, None),
        Err(e) => {
            eprintln!("error: {e}");
            (e.exit_code(), Some(e.to_string()))
        }
    };
    if let Err(e) = mf.finish(&manifest_path, code, message) {
        eprintln!("error: could not write manifest {}: {e}", manifest_path.display());
        return ExitCode::from(4);
    }
    ExitCode::from(code as u8)
}
