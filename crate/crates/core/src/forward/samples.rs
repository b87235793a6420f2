use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scene::{dipole_sum, DipoleWeight, KernelMethod, Scene};
use crate::sphharm::{QuadNode, QuadRule, SphDir};
use crate::{CVec3, GeomagError, Result, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Epoch {
    /// Difference field `H_s - H` between the epochs.
    Delta,
    /// Perturbation `H - H_0` at epoch 0.
    Epoch0,
}

/// Sidecar metadata of a sample file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub radius: f64,
    pub epoch: Epoch,
    pub noise_rel: f64,
    pub seed: u64,
    pub quad_level: Option<usize>,
    /// Polynomial exactness of the node set.
    pub exactness: usize,
    pub scene_hash: String,
}

/// Complex field values at `R` times the nodes of a sphere quadrature.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VectorFieldSamples {
    pub quad: QuadRule,
    pub values: Vec<CVec3>,
    pub meta: SampleMeta,
}

pub const CSV_HEADER: [&str; 10] = ["ux", "uy", "uz", "weight", "re_hx", "im_hx", "re_hy", "im_hy", "re_hz", "im_hz"];

impl VectorFieldSamples {
    pub fn new(quad: QuadRule, values: Vec<CVec3>, meta: SampleMeta) -> Result<Self> {
        let s = VectorFieldSamples { quad, values, meta };
        s.validate()?;
        Ok(s)
    }

    pub fn radius(&self) -> f64 {
        self.meta.radius
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.quad.len() {
            return Err(GeomagError::Format(format!(
                "{} values for {} quadrature nodes",
                self.values.len(),
                self.quad.len()
            )));
        }
        if !self.values.iter().all(|v| v.iter().all(|c| c.re.is_finite() && c.im.is_finite())) {
            return Err(GeomagError::Format("non-finite sample value".into()));
        }
        if !(self.meta.radius > 0.0) || !self.meta.radius.is_finite() {
            return Err(GeomagError::Format(format!("invalid radius {}", self.meta.radius)));
        }
        Ok(())
    }

    /// Root mean square of `|H|` over the nodes.
    pub fn rms(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        (self.values.iter().map(|v| v.norm_squared()).sum::<f64>() / self.values.len() as f64).sqrt()
    }

    /// Multiplies every value by `k`.
    pub fn scaled(&self, k: Complex64) -> Self {
        let mut s = self.clone();
        s.values.iter_mut().for_each(|v| *v *= k);
        s
    }

    /// Checks that two sample sets live on the same nodes and radius.
    pub fn check_same_grid(&self, other: &VectorFieldSamples) -> Result<()> {
        if self.len() != other.len() || (self.radius() - other.radius()).abs() > 1e-12 * self.radius() {
            return Err(GeomagError::Format("sample sets use different quadratures or radii".into()));
        }
        for (a, b) in self.quad.nodes().iter().zip(other.quad.nodes()) {
            if (a.dir.vector() - b.dir.vector()).norm() > 1e-12 || (a.weight - b.weight).abs() > 1e-12 {
                return Err(GeomagError::Format("sample sets use different quadrature nodes".into()));
            }
        }
        Ok(())
    }

    /// Writes the CSV table and a JSON sidecar next to it (`.json` extension).
    pub fn write(&self, csv_path: &Path) -> Result<PathBuf> {
        self.validate()?;
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(csv_path)?));
        w.write_record(CSV_HEADER)?;
        for (node, v) in self.quad.nodes().iter().zip(&self.values) {
            let u = node.dir.vector();
            let row = [u[0], u[1], u[2], node.weight, v[0].re, v[0].im, v[1].re, v[1].im, v[2].re, v[2].im];
            // Debug formatting of f64 is the shortest representation that parses back exactly.
            w.write_record(row.iter().map(|x| format!("{x:?}")))?;
        }
        w.flush()?;
        let side = sidecar_path(csv_path);
        let mut f = BufWriter::new(File::create(&side)?);
        serde_json::to_writer_pretty(&mut f, &self.meta)?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(side)
    }

    pub fn read(csv_path: &Path) -> Result<Self> {
        let side = sidecar_path(csv_path);
        let meta: SampleMeta = serde_json::from_reader(BufReader::new(File::open(&side)?))
            .map_err(|e| GeomagError::parse(Some(side.clone()), e.to_string()))?;
        let mut r = csv::Reader::from_reader(BufReader::new(File::open(csv_path)?));
        let header: Vec<String> = r.headers()?.iter().map(|s| s.trim().to_string()).collect();
        if header != CSV_HEADER {
            return Err(GeomagError::Format(format!(
                "{}: expected header {}, found {}",
                csv_path.display(),
                CSV_HEADER.join(","),
                header.join(",")
            )));
        }
        let mut nodes = Vec::new();
        let mut values = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != 10 {
                return Err(GeomagError::parse(Some(csv_path.into()), format!("row {} has {} fields", i + 2, rec.len())));
            }
            let mut x = [0.0; 10];
            for (k, f) in rec.iter().enumerate() {
                x[k] = f.trim().parse().map_err(|_| {
                    GeomagError::parse(Some(csv_path.into()), format!("row {} column {}: bad number {f:?}", i + 2, k + 1))
                })?;
            }
            let dir = SphDir::new(Vec3::new(x[0], x[1], x[2]))
                .map_err(|e| GeomagError::parse(Some(csv_path.into()), format!("row {}: {e}", i + 2)))?;
            nodes.push(QuadNode { dir, weight: x[3] });
            values.push(CVec3::new(
                Complex64::new(x[4], x[5]),
                Complex64::new(x[6], x[7]),
                Complex64::new(x[8], x[9]),
            ));
        }
        if let Some(level) = meta.quad_level {
            if nodes.len() != 2 * level * level {
                return Err(GeomagError::Format(format!(
                    "{} rows do not match quadrature level {level} ({} nodes)",
                    nodes.len(),
                    2 * level * level
                )));
            }
        }
        let quad = QuadRule::from_nodes(nodes, meta.exactness, meta.quad_level);
        VectorFieldSamples::new(quad, values, meta)
    }
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Evaluates the chosen epoch field at `R` times the quadrature nodes and
/// adds Gaussian noise of standard deviation `noise_rel * rms` per component.
///
/// Real fields get real noise. Complex fields get noise on both parts with
/// the variance split evenly.
pub fn synthesize_measurement(
    scene: &Scene,
    weights: &[DipoleWeight],
    quad: &QuadRule,
    epoch: Epoch,
    noise_rel: f64,
    seed: u64,
) -> Result<VectorFieldSamples> {
    synthesize_measurement_with(scene, weights, quad, epoch, noise_rel, seed, KernelMethod::Direct)
}

pub fn synthesize_measurement_with(
    scene: &Scene,
    weights: &[DipoleWeight],
    quad: &QuadRule,
    epoch: Epoch,
    noise_rel: f64,
    seed: u64,
    method: KernelMethod,
) -> Result<VectorFieldSamples> {
    scene.check_basic()?;
    if !(noise_rel >= 0.0) || !noise_rel.is_finite() {
        return Err(GeomagError::domain("noise_rel must be a finite non-negative number"));
    }
    let r = scene.radius;
    if r <= 2.0 * scene.max_center_norm() {
        return Err(GeomagError::Geometry(format!(
            "measurement radius {r} must exceed twice the largest center norm {}",
            scene.max_center_norm()
        )));
    }
    let mut values = quad
        .nodes()
        .par_iter()
        .map(|n| {
            let x = n.dir.vector() * r;
            match epoch {
                Epoch::Delta => dipole_sum(scene, weights, &x, method, |w| w.w),
                Epoch::Epoch0 => dipole_sum(scene, weights, &x, method, |w| w.v),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let meta = SampleMeta {
        radius: r,
        epoch,
        noise_rel,
        seed,
        quad_level: quad.level(),
        exactness: quad.exactness(),
        scene_hash: scene.hash(),
    };
    let mut s = VectorFieldSamples {
        quad: quad.clone(),
        values: Vec::new(),
        meta,
    };
    if noise_rel > 0.0 && !values.is_empty() {
        let rms = (values.iter().map(|v| v.norm_squared()).sum::<f64>() / values.len() as f64).sqrt();
        let complex = values.iter().any(|v| v.iter().any(|c| c.im != 0.0));
        let sd = if complex { noise_rel * rms / 2f64.sqrt() } else { noise_rel * rms };
        let normal = Normal::new(0.0, sd).map_err(|e| GeomagError::domain(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in values.iter_mut() {
            for c in v.iter_mut() {
                c.re += normal.sample(&mut rng);
                if complex {
                    c.im += normal.sample(&mut rng);
                }
            }
        }
    }
    s.values = values;
    s.validate()?;
    Ok(s)
}
