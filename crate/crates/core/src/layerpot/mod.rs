//! Piecewise-constant collocation of the Laplace single-layer potential and
//! the Neumann-Poincare operator `K*` on flat triangulated surfaces.
//!
//! Kernel convention: `Gamma_0(x) = -1/(4 pi |x|)`, so
//! `K*[phi](x) = int nu_x . (x - y) / (4 pi |x - y|^3) phi(y) ds_y` and the
//! normal derivative of the single layer jumps by `phi` across the surface.

mod mesh;
mod operator;

pub use mesh::TriMesh;
pub use operator::{assemble_k_star, NPOperator, ShiftSign, ShiftedSolver};

use nalgebra::DVector;
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::{CVec3, GeomagError, Result, Vec3};

/// One complex value per panel.
pub type PanelDensity = DVector<Complex64>;

pub(crate) fn check_density(mesh: &TriMesh, d: &PanelDensity) -> Result<()> {
    if d.len() != mesh.len() {
        Err(GeomagError::domain(format!(
            "density has {} entries for a mesh of {} panels",
            d.len(),
            mesh.len()
        )))
    } else {
        Ok(())
    }
}

/// Gradient of `S[phi](x) = int Gamma_0(x - y) phi(y) ds_y` at an off-surface point,
/// one centroid node per panel.
///
/// Fails when the point is within one panel diameter of a panel centroid,
/// where the centroid rule is not accurate.
pub fn eval_single_layer_grad(mesh: &TriMesh, density: &PanelDensity, point: &Vec3) -> Result<CVec3> {
    check_density(mesh, density)?;
    let diam = mesh.max_panel_diameter();
    let mut g = CVec3::zeros();
    for ((c, a), phi) in mesh.centroids().iter().zip(mesh.areas()).zip(density.iter()) {
        let r = point - c;
        let d = r.norm();
        if d <= diam {
            return Err(GeomagError::Accuracy(format!(
                "evaluation point lies {d:.3e} from a panel centroid, within the panel diameter {diam:.3e}"
            )));
        }
        let k = *a / (4.0 * PI * d * d * d);
        g += r.map(|v| Complex64::new(v * k, 0.0)) * *phi;
    }
    Ok(g)
}
