//! Python bindings: scenes, synthetic measurements, polarization tensors and reconstruction.

use std::path::PathBuf;

use geomag_core::forward::{
    dipole_weights, scene_tensors, synthesize_measurement, validate_scene, Epoch, VectorFieldSamples,
};
use geomag_core::inverse::{
    extract_moments, locate_single, recover_alpha, reconstruct_multi, ReconstructOptions, ReconstructionResult,
};
use geomag_core::layerpot::{assemble_k_star, TriMesh};
use geomag_core::polarization::{
    analytic_ball_tensors, check_nonsingular, compute_tensors, AnomalyMaterial, Materials, PolarizationSet,
    TensorOptions, DEFAULT_OMEGA,
};
use geomag_core::sphharm::{eval_ynm, sphere_quadrature, SphDir};
use geomag_core::{CMat3, CVec3, GeomagError};
use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(geomag, Error, PyException, "Raised for any failure reported by the geomag core.");

fn err(e: GeomagError) -> PyErr {
    Error::new_err(e.to_string())
}

fn json_err(e: serde_json::Error) -> PyErr {
    Error::new_err(e.to_string())
}

fn rows(m: &CMat3) -> Vec<Vec<Complex64>> {
    (0..3).map(|i| (0..3).map(|j| m[(i, j)]).collect()).collect()
}

fn cvec(v: [Complex64; 3]) -> CVec3 {
    CVec3::new(v[0], v[1], v[2])
}

/// A configured set of anomalies with materials, background field and measurement radius.
#[pyclass(module = "geomag", skip_from_py_object)]
struct Scene {
    inner: geomag_core::forward::Scene,
}

#[pymethods]
impl Scene {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Scene { inner: serde_json::from_str(text).map_err(json_err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(json_err)
    }

    /// Content hash used to tag synthesized samples.
    fn hash(&self) -> String {
        self.inner.hash()
    }

    #[getter]
    fn radius(&self) -> f64 {
        self.inner.radius
    }

    #[getter]
    fn centers(&self) -> Vec<[f64; 3]> {
        self.inner.anomalies.iter().map(|a| a.center).collect()
    }

    /// Returns `(violations, warnings)` as lists of messages.
    fn validate(&self) -> (Vec<String>, Vec<String>) {
        let r = validate_scene(&self.inner);
        (
            r.violations.iter().map(|f| f.to_string()).collect(),
            r.warnings.iter().map(|f| f.to_string()).collect(),
        )
    }

    /// Synthesizes `"delta"` or `"epoch0"` samples on the product quadrature of the given level.
    #[pyo3(signature = (epoch = "delta", quad_level = 24, noise = 0.0, seed = 0))]
    fn simulate(&self, epoch: &str, quad_level: usize, noise: f64, seed: u64) -> PyResult<Samples> {
        let epoch = match epoch {
            "delta" => Epoch::Delta,
            "epoch0" => Epoch::Epoch0,
            other => return Err(Error::new_err(format!("epoch must be 'delta' or 'epoch0', got {other:?}"))),
        };
        let s = &self.inner;
        let w = dipole_weights(s, &scene_tensors(s, &TensorOptions::default()).map_err(err)?).map_err(err)?;
        let quad = sphere_quadrature(quad_level).map_err(err)?;
        let inner = synthesize_measurement(s, &w, &quad, epoch, noise, seed).map_err(err)?;
        Ok(Samples { inner })
    }

    fn __repr__(&self) -> String {
        format!("Scene(anomalies={}, radius={})", self.inner.anomalies.len(), self.inner.radius)
    }
}

/// Vector field samples on a sphere of radius R.
#[pyclass(module = "geomag", skip_from_py_object)]
struct Samples {
    inner: VectorFieldSamples,
}

#[pymethods]
impl Samples {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Samples { inner: VectorFieldSamples::read(&path).map_err(err)? })
    }

    /// Writes the CSV and its JSON sidecar; returns the sidecar path.
    fn write(&self, path: PathBuf) -> PyResult<PathBuf> {
        self.inner.write(&path).map_err(err)
    }

    #[getter]
    fn radius(&self) -> f64 {
        self.inner.radius()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Unit directions and quadrature weights.
    fn nodes(&self) -> Vec<([f64; 3], f64)> {
        self.inner
            .quad
            .nodes()
            .iter()
            .map(|n| {
                let v = n.dir.vector();
                ([v[0], v[1], v[2]], n.weight)
            })
            .collect()
    }

    fn values(&self) -> Vec<[Complex64; 3]> {
        self.inner.values.iter().map(|v| [v[0], v[1], v[2]]).collect()
    }

    fn rms(&self) -> f64 {
        self.inner.rms()
    }

    /// Multipole moments `c[n][m]` up to `nmax`, degree-major from n = 0.
    fn moments(&self, nmax: usize) -> PyResult<Vec<Complex64>> {
        Ok(extract_moments(&self.inner, nmax).map_err(err)?.c)
    }

    /// Closed-form center and weight of a single anomaly from moments up to `nmax`.
    #[pyo3(signature = (delta, nmax = 3))]
    fn locate_single(&self, delta: f64, nmax: usize) -> PyResult<([f64; 3], [Complex64; 3])> {
        let m = extract_moments(&self.inner, nmax).map_err(err)?;
        let (z, w) = locate_single(&m, delta).map_err(err)?;
        Ok(([z[0], z[1], z[2]], [w[0], w[1], w[2]]))
    }
}

/// Polarization tensors `P0`, `D`, `M` and `P` as 3x3 nested lists of complex numbers.
#[pyclass(module = "geomag", skip_from_py_object)]
struct Tensors {
    inner: PolarizationSet,
    #[pyo3(get)]
    nonsingular: bool,
    #[pyo3(get)]
    condition_value: Complex64,
}

#[pymethods]
impl Tensors {
    #[getter]
    fn p0(&self) -> Vec<Vec<Complex64>> {
        rows(&self.inner.p0)
    }

    #[getter]
    fn d(&self) -> Vec<Vec<Complex64>> {
        rows(&self.inner.d)
    }

    #[getter]
    fn m(&self) -> Vec<Vec<Complex64>> {
        rows(&self.inner.m)
    }

    #[getter]
    fn p(&self) -> Vec<Vec<Complex64>> {
        rows(&self.inner.p)
    }

    fn max_relative_error(&self, reference: &Tensors) -> f64 {
        self.inner.max_relative_error(&reference.inner)
    }
}

/// Tensors of one anomaly. `shape` is `"ball"` (closed form), `"icosphere"` or a path to an OFF mesh.
#[pyfunction]
#[pyo3(signature = (shape, mu, eps, eps_shell, sigma = 0.0, mu0 = 1.0, eps0 = 1.0, omega = DEFAULT_OMEGA, refinement = 3))]
#[allow(clippy::too_many_arguments)]
fn tensors(
    shape: &str,
    mu: f64,
    eps: f64,
    eps_shell: f64,
    sigma: f64,
    mu0: f64,
    eps0: f64,
    omega: f64,
    refinement: usize,
) -> PyResult<Tensors> {
    let mats = Materials {
        mu0,
        eps0,
        eps_shell,
        omega,
        anomalies: vec![AnomalyMaterial { mu, eps, sigma }],
    };
    let opts = TensorOptions::default();
    let inner = match shape {
        "ball" => analytic_ball_tensors(&mats, 0, &opts),
        "icosphere" => TriMesh::icosphere(refinement)
            .and_then(|m| assemble_k_star(&m))
            .and_then(|op| compute_tensors(&op, &mats, 0, &opts)),
        path => TriMesh::load_off(path.as_ref())
            .and_then(|m| assemble_k_star(&m))
            .and_then(|op| compute_tensors(&op, &mats, 0, &opts)),
    }
    .map_err(err)?;
    let ns = check_nonsingular(&mats, 0).map_err(err)?;
    Ok(Tensors { inner, nonsingular: ns.nonsingular, condition_value: ns.condition_value })
}

#[pyclass(module = "geomag", skip_from_py_object)]
struct Anomaly {
    #[pyo3(get)]
    z: [f64; 3],
    #[pyo3(get)]
    w: [Complex64; 3],
    #[pyo3(get)]
    v: Option<[Complex64; 3]>,
    #[pyo3(get)]
    alpha: Option<f64>,
    #[pyo3(get)]
    mu: Option<f64>,
    #[pyo3(get)]
    ghost: bool,
}

#[pymethods]
impl Anomaly {
    fn __repr__(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("None".to_string(), |x| x.to_string());
        let ghost = if self.ghost { "True" } else { "False" };
        format!("Anomaly(z={:?}, alpha={}, mu={}, ghost={ghost})", self.z, opt(self.alpha), opt(self.mu))
    }
}

/// Output of [`reconstruct`].
#[pyclass(module = "geomag", skip_from_py_object)]
struct Reconstruction {
    inner: ReconstructionResult,
}

#[pymethods]
impl Reconstruction {
    #[getter]
    fn anomalies(&self) -> Vec<Anomaly> {
        self.inner
            .anomalies
            .iter()
            .map(|a| {
                let w = a.w();
                Anomaly {
                    z: a.z,
                    w: [w[0], w[1], w[2]],
                    v: a.v().map(|v| [v[0], v[1], v[2]]),
                    alpha: a.alpha,
                    mu: a.mu,
                    ghost: a.diagnostics.ghost,
                }
            })
            .collect()
    }

    #[getter]
    fn residual(&self) -> f64 {
        self.inner.residual
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.diagnostics.converged
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(json_err)
    }
}

/// Fits `l0` anomalies to epoch-difference samples. With `epoch0` the exponents are
/// recovered; with `prior` (a scene giving background and materials) the permeabilities too.
#[pyfunction]
#[pyo3(signature = (delta_samples, l0, delta, epoch0 = None, nmax = 5, starts = 32, seed = 0, prior = None))]
#[allow(clippy::too_many_arguments)]
fn reconstruct(
    py: Python<'_>,
    delta_samples: &Samples,
    l0: usize,
    delta: f64,
    epoch0: Option<&Samples>,
    nmax: usize,
    starts: usize,
    seed: u64,
    prior: Option<&Scene>,
) -> PyResult<Reconstruction> {
    let opts = ReconstructOptions {
        nmax,
        starts,
        seed,
        prior: prior.map(|p| p.inner.clone()),
        ..Default::default()
    };
    let sd = &delta_samples.inner;
    let s0 = epoch0.map(|s| &s.inner);
    let inner = py.detach(|| reconstruct_multi(sd, s0, l0, delta, &opts)).map_err(err)?;
    Ok(Reconstruction { inner })
}

/// Orthonormal spherical harmonic `Y_n^m(theta, phi)` with the Condon-Shortley phase.
#[pyfunction]
fn ynm(n: usize, m: i64, theta: f64, phi: f64) -> PyResult<Complex64> {
    eval_ynm(n, m, &SphDir::from_angles(theta, phi)).map_err(err)
}

/// Directions and weights of the product quadrature rule of the given level.
#[pyfunction]
fn quadrature(level: usize) -> PyResult<(Vec<[f64; 3]>, Vec<f64>)> {
    let q = sphere_quadrature(level).map_err(err)?;
    Ok(q.nodes()
        .iter()
        .map(|n| {
            let v = n.dir.vector();
            ([v[0], v[1], v[2]], n.weight)
        })
        .unzip())
}

/// Growth exponent from the epoch-difference weight `w` and epoch-0 weight `v`.
#[pyfunction]
fn alpha_from_weights(w: [Complex64; 3], v: [Complex64; 3], delta: f64) -> PyResult<f64> {
    recover_alpha(&cvec(w), &cvec(v), delta).map_err(err)
}

#[pymodule]
fn geomag(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("Error", m.py().get_type::<Error>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<Scene>()?;
    m.add_class::<Samples>()?;
    m.add_class::<Tensors>()?;
    m.add_class::<Anomaly>()?;
    m.add_class::<Reconstruction>()?;
    m.add_function(wrap_pyfunction!(tensors, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(ynm, m)?)?;
    m.add_function(wrap_pyfunction!(quadrature, m)?)?;
    m.add_function(wrap_pyfunction!(alpha_from_weights, m)?)?;
    Ok(())
}
