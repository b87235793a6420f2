use std::path::{Path, PathBuf};

use geomag_core::forward::{Anomaly, BackgroundField, Scene, Shape};
use geomag_core::polarization::{AnomalyMaterial, Materials, DEFAULT_OMEGA};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::manifest::sha256_hex;

/// Background constants shared by all anomalies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConstants {
    pub mu0: f64,
    pub eps0: f64,
    pub eps_shell: f64,
    #[serde(default = "default_omega")]
    pub omega: f64,
}

fn default_omega() -> f64 {
    DEFAULT_OMEGA
}

/// `"ball"`, `"icosphere:<refinement>"`, a path to an OFF mesh, or the
/// tagged form (`{"icosphere": 3}`, `{"mesh": "path"}`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShapeSpec {
    Name(String),
    Tagged(Shape),
}

impl Default for ShapeSpec {
    fn default() -> Self {
        ShapeSpec::Name("ball".into())
    }
}

impl ShapeSpec {
    pub fn resolve(&self, base: &Path) -> CliResult<Shape> {
        let rel = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        Ok(match self {
            ShapeSpec::Tagged(Shape::Mesh(p)) => Shape::Mesh(rel(p)),
            ShapeSpec::Tagged(s) => s.clone(),
            ShapeSpec::Name(n) if n == "ball" => Shape::Ball,
            ShapeSpec::Name(n) => match n.strip_prefix("icosphere:") {
                Some(r) => Shape::Icosphere(
                    r.parse()
                        .map_err(|_| CliError::Input(format!("bad icosphere refinement in shape {n:?}")))?,
                ),
                None => Shape::Mesh(rel(Path::new(n))),
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnomalyConfig {
    pub center: [f64; 3],
    #[serde(default)]
    pub shape: ShapeSpec,
    pub delta: f64,
    pub alpha: f64,
    pub mu: f64,
    pub eps: f64,
    #[serde(default)]
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Measurement {
    pub radius: f64,
    #[serde(default = "default_level")]
    pub quad_level: usize,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    /// Also write epoch-0 samples.
    #[serde(default = "default_true")]
    pub epoch0: bool,
}

fn default_level() -> usize {
    24
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub materials: MaterialConstants,
    pub anomalies: Vec<AnomalyConfig>,
    pub background: BackgroundField,
    pub measurement: Measurement,
}

pub struct LoadedConfig {
    pub config: ScenarioConfig,
    pub scene: Scene,
    pub hash: String,
    pub path: PathBuf,
}

impl ScenarioConfig {
    /// The scene described by this configuration; each anomaly gets its own material entry.
    pub fn to_scene(&self, base: &Path) -> CliResult<Scene> {
        let mut anomalies = Vec::with_capacity(self.anomalies.len());
        let mut table = Vec::with_capacity(self.anomalies.len());
        for (l, a) in self.anomalies.iter().enumerate() {
            anomalies.push(Anomaly {
                center: a.center,
                shape: a.shape.resolve(base)?,
                delta: a.delta,
                alpha: a.alpha,
                material: l,
            });
            table.push(AnomalyMaterial {
                mu: a.mu,
                eps: a.eps,
                sigma: a.sigma,
            });
        }
        let m = &self.materials;
        Ok(Scene {
            anomalies,
            materials: Materials {
                mu0: m.mu0,
                eps0: m.eps0,
                eps_shell: m.eps_shell,
                omega: m.omega,
                anomalies: table,
            },
            background: self.background.clone(),
            radius: self.measurement.radius,
        })
    }
}

pub fn load(path: &Path) -> CliResult<LoadedConfig> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let config: ScenarioConfig =
        serde_json::from_slice(&bytes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let scene = config.to_scene(base)?;
    Ok(LoadedConfig {
        config,
        scene,
        hash: sha256_hex(&bytes),
        path: path.to_path_buf(),
    })
}
