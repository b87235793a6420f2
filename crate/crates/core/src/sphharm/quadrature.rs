use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::SphDir;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, ascending.
pub fn gauss_legendre(count: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; count];
    let mut weights = vec![0.0; count];
    let nf = count as f64;
    for i in 0..count.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut t = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(count, t);
            dp = d;
            let step = p / d;
            t -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(count, t);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - t * t) * dp * dp);
        nodes[i] = -t;
        nodes[count - 1 - i] = t;
        weights[i] = w;
        weights[count - 1 - i] = w;
    }
    if count % 2 == 1 {
        nodes[count / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, t: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, t);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, d)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuadNode {
    pub dir: SphDir,
    pub weight: f64,
}

/// Quadrature rule on the unit sphere with a declared polynomial exactness.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuadRule {
    nodes: Vec<QuadNode>,
    exactness: usize,
    level: Option<usize>,
}

impl QuadRule {
    /// Wrap arbitrary nodes. The caller vouches for `exactness`.
    pub fn from_nodes(nodes: Vec<QuadNode>, exactness: usize, level: Option<usize>) -> Self {
        QuadRule {
            nodes,
            exactness,
            level,
        }
    }

    pub fn nodes(&self) -> &[QuadNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn exactness(&self) -> usize {
        self.exactness
    }

    /// Product-rule level, when the rule came from [`sphere_quadrature`].
    pub fn level(&self) -> Option<usize> {
        self.level
    }

    pub fn total_weight(&self) -> f64 {
        self.nodes.iter().map(|q| q.weight).sum()
    }

    pub fn points(&self) -> impl Iterator<Item = (&Vector3<f64>, f64)> {
        self.nodes.iter().map(|q| (q.dir.vector(), q.weight))
    }

    pub(crate) fn require(&self, degree: usize) -> crate::Result<()> {
        if self.exactness < degree {
            Err(crate::GeomagError::Precision {
                required: degree,
                available: self.exactness,
            })
        } else {
            Ok(())
        }
    }
}

/// Tensor-product rule: `level` Gauss-Legendre nodes in `cos(theta)` times
/// `2 * level` equispaced azimuths. Exact for spherical polynomials of total
/// degree `2 * level - 1`.
pub fn sphere_quadrature(level: usize) -> crate::Result<QuadRule> {
    if level == 0 {
        return Err(crate::GeomagError::domain("quadrature level must be >= 1"));
    }
    let (ts, ws) = gauss_legendre(level);
    let n_phi = 2 * level;
    let dphi = 2.0 * PI / n_phi as f64;
    let mut nodes = Vec::with_capacity(level * n_phi);
    for (t, w) in ts.iter().zip(&ws) {
        let theta = t.clamp(-1.0, 1.0).acos();
        for j in 0..n_phi {
            let phi = (j as f64 + 0.5) * dphi;
            nodes.push(QuadNode {
                dir: SphDir::from_angles(theta, phi),
                weight: w * dphi,
            });
        }
    }
    Ok(QuadRule {
        nodes,
        exactness: 2 * level - 1,
        level: Some(level),
    })
}

/// Smallest product-rule level whose exactness reaches `degree`.
pub fn level_for_exactness(degree: usize) -> usize {
    (degree + 1).div_ceil(2).max(1)
}
