use std::fmt;

use serde::{Deserialize, Serialize};

use super::scene::Scene;
use crate::polarization::check_nonsingular;

/// Multi-anomaly window for the variation exponents.
pub const ALPHA_WINDOW: (f64, f64) = (-0.25, 1.0 / 3.0);
pub const SEPARABILITY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    AlphaWindow,
    AlphaBelowMinusOne,
    Separability,
    Sparsity,
    Radius,
    BackgroundVanishing,
    Background,
    TensorSingularity,
    Materials,
    Shape,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub kind: CheckKind,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:?}] {}", self.kind, self.message)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Finding>,
    pub warnings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: CheckKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    fn violation(&mut self, kind: CheckKind, message: String) {
        self.violations.push(Finding { kind, message });
    }

    fn warning(&mut self, kind: CheckKind, message: String) {
        self.warnings.push(Finding { kind, message });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "violation: {v}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// Checks every hypothesis the leading-order model and the inversion rely on.
/// Never fails; problems are collected in the report.
pub fn validate_scene(scene: &Scene) -> ValidationReport {
    use CheckKind::*;
    let mut rep = ValidationReport::default();
    if let Err(e) = scene.materials.validate() {
        rep.violation(Materials, e.to_string());
    }
    if let Err(e) = scene.background.validate() {
        rep.violation(Background, e.to_string());
    }
    if !(scene.radius > 0.0) || !scene.radius.is_finite() {
        rep.violation(Radius, format!("measurement radius {} must be positive", scene.radius));
    } else if scene.radius <= 2.0 * scene.max_center_norm() {
        rep.violation(
            Radius,
            format!(
                "R > 2 max|z_l| violated: R = {}, max|z_l| = {}",
                scene.radius,
                scene.max_center_norm()
            ),
        );
    }

    let multi = scene.anomalies.len() > 1;
    let (lo, hi) = ALPHA_WINDOW;
    let mut supports = Vec::with_capacity(scene.anomalies.len());
    for (l, a) in scene.anomalies.iter().enumerate() {
        if a.alpha <= -1.0 {
            rep.violation(AlphaBelowMinusOne, format!("alpha > -1 violated by anomaly {l} (alpha = {})", a.alpha));
        }
        if !(a.alpha > lo && a.alpha < hi) {
            let msg = format!("-1/4 < alpha < 1/3 violated by anomaly {l} (alpha = {})", a.alpha);
            if multi {
                rep.violation(AlphaWindow, msg);
            } else {
                rep.warning(AlphaWindow, msg + "; allowed for a single anomaly");
            }
        }
        if !(a.delta > 0.0 && a.delta < 1.0) {
            rep.violation(Sparsity, format!("anomaly {l}: delta = {} must lie in (0, 1)", a.delta));
        }
        let support = match a.shape.reference_radius() {
            Ok(r) => a.support_radius(r),
            Err(e) => {
                rep.violation(Shape, format!("anomaly {l}: {e}"));
                f64::NAN
            }
        };
        supports.push(support);
        if support.is_finite() && scene.radius - a.z().norm() < 10.0 * support {
            rep.violation(
                Sparsity,
                format!(
                    "anomaly {l}: distance to the measurement sphere {:.4e} is below 10 x support radius {support:.4e}",
                    scene.radius - a.z().norm()
                ),
            );
        }
        match scene.background.vanishes_at(&a.z()) {
            Ok(true) => rep.violation(BackgroundVanishing, format!("background field vanishes at the center of anomaly {l}")),
            Ok(false) => {}
            Err(e) => rep.violation(BackgroundVanishing, format!("anomaly {l}: {e}")),
        }
        match check_nonsingular(&scene.materials, a.material) {
            Ok(d) if !d.nonsingular => rep.violation(
                TensorSingularity,
                format!(
                    "anomaly {l}: mu eps_s^2 + 2(mu0 - mu) eps_s gamma + 2(mu + 2 mu0) eps0 gamma = mu0 eps_s^2 (residual {:.3e})",
                    d.condition_value.norm()
                ),
            ),
            Ok(_) => {}
            Err(e) => rep.violation(Materials, format!("anomaly {l}: {e}")),
        }
    }

    for i in 0..scene.anomalies.len() {
        for j in 0..scene.anomalies.len() {
            if i == j {
                continue;
            }
            let (ai, aj) = (scene.anomalies[i].alpha, scene.anomalies[j].alpha);
            let gap = 3.0 * (ai + 1.0) - 4.0 * (aj + 1.0);
            if gap.abs() <= SEPARABILITY_TOL {
                rep.violation(
                    Separability,
                    format!("3(alpha_{i} + 1) = 4(alpha_{j} + 1) for alpha_{i} = {ai}, alpha_{j} = {aj}"),
                );
            }
            if i < j {
                let d = (scene.anomalies[i].z() - scene.anomalies[j].z()).norm();
                let reach = supports[i] + supports[j];
                if reach.is_finite() && d <= reach {
                    rep.violation(
                        Sparsity,
                        format!("anomalies {i} and {j} overlap: center distance {d:.4e} <= {reach:.4e}"),
                    );
                }
            }
        }
    }
    if let crate::forward::BackgroundField::Dipole { source, .. } = &scene.background {
        let s = nalgebra::Vector3::from(*source).norm();
        if s <= scene.radius {
            rep.violation(
                Background,
                format!("background dipole source at |s| = {s} lies inside the measurement sphere"),
            );
        }
    }
    rep
}
