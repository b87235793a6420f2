use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::{GeomagError, Result, Vec3};

const MIN_PANEL_AREA: f64 = 1e-14;

/// Closed, outward-oriented triangulated surface with per-panel geometry.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    centroids: Vec<Vec3>,
    normals: Vec<Vec3>,
    areas: Vec<f64>,
    #[serde(default)]
    flipped: bool,
}

impl TriMesh {
    /// Validates closure and orientation. An inward-oriented surface is
    /// flipped with a warning; [`TriMesh::was_flipped`] reports it.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(GeomagError::Mesh("mesh has no triangles".into()));
        }
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i >= vertices.len())) {
            return Err(GeomagError::Mesh(format!(
                "triangle {t:?} references a vertex beyond {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(GeomagError::Mesh("non-finite vertex coordinate".into()));
        }
        check_closed(&triangles)?;
        let mut mesh = TriMesh {
            vertices,
            triangles,
            centroids: Vec::new(),
            normals: Vec::new(),
            areas: Vec::new(),
            flipped: false,
        };
        mesh.compute_geometry()?;
        if mesh.volume() < 0.0 {
            log::warn!("mesh normals point inward; flipping orientation of all triangles");
            for t in &mut mesh.triangles {
                t.swap(1, 2);
            }
            mesh.compute_geometry()?;
            mesh.flipped = true;
        }
        Ok(mesh)
    }

    fn compute_geometry(&mut self) -> Result<()> {
        let n = self.triangles.len();
        self.centroids = Vec::with_capacity(n);
        self.normals = Vec::with_capacity(n);
        self.areas = Vec::with_capacity(n);
        for (k, t) in self.triangles.iter().enumerate() {
            let [a, b, c] = t.map(|i| self.vertices[i]);
            let cross = (b - a).cross(&(c - a));
            let area = 0.5 * cross.norm();
            if !(area >= MIN_PANEL_AREA) {
                return Err(GeomagError::Mesh(format!("panel {k} is degenerate (area {area:.3e})")));
            }
            self.centroids.push((a + b + c) / 3.0);
            self.normals.push(cross / (2.0 * area));
            self.areas.push(area);
        }
        Ok(())
    }

    /// Icosahedron refined `refinement` times by edge midpoints, projected to
    /// the unit sphere. Panel count is `20 * 4^refinement`.
    pub fn icosphere(refinement: usize) -> Result<Self> {
        if refinement > 6 {
            return Err(GeomagError::domain(format!("icosphere refinement {refinement} exceeds 6")));
        }
        let p = (1.0 + 5f64.sqrt()) / 2.0;
        let mut vertices: Vec<Vec3> = [
            [-1.0, p, 0.0],
            [1.0, p, 0.0],
            [-1.0, -p, 0.0],
            [1.0, -p, 0.0],
            [0.0, -1.0, p],
            [0.0, 1.0, p],
            [0.0, -1.0, -p],
            [0.0, 1.0, -p],
            [p, 0.0, -1.0],
            [p, 0.0, 1.0],
            [-p, 0.0, -1.0],
            [-p, 0.0, 1.0],
        ]
        .iter()
        .map(|v| Vector3::from(*v).normalize())
        .collect();
        let mut triangles: Vec<[usize; 3]> = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        for _ in 0..refinement {
            let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
            let mut mid = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
                let key = (a.min(b), a.max(b));
                *midpoints.entry(key).or_insert_with(|| {
                    verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                    verts.len() - 1
                })
            };
            let mut next = Vec::with_capacity(triangles.len() * 4);
            for &[a, b, c] in &triangles {
                let ab = mid(a, b, &mut vertices);
                let bc = mid(b, c, &mut vertices);
                let ca = mid(c, a, &mut vertices);
                next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            triangles = next;
        }
        TriMesh::new(vertices, triangles)
    }

    /// Reads the ASCII `OFF` subset: header, `V F 0`, vertex rows, `3 i j k` faces.
    pub fn load_off(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_off(&text, Some(path))
    }

    pub fn parse_off(text: &str, location: Option<&Path>) -> Result<Self> {
        let loc = || location.map(Path::to_path_buf);
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        match lines.next() {
            Some((_, "OFF")) => {}
            Some((i, other)) => {
                return Err(GeomagError::parse(loc(), format!("line {i}: expected `OFF`, found `{other}`")))
            }
            None => return Err(GeomagError::parse(loc(), "empty file")),
        }
        let (ci, counts) = lines
            .next()
            .ok_or_else(|| GeomagError::parse(loc(), "missing counts line"))?;
        let counts: Vec<usize> = counts
            .split_whitespace()
            .map(|t| t.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| GeomagError::parse(loc(), format!("line {ci}: bad counts: {e}")))?;
        if counts.len() < 2 {
            return Err(GeomagError::parse(loc(), format!("line {ci}: expected `V F 0`")));
        }
        let (nv, nf) = (counts[0], counts[1]);
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (i, l) = lines
                .next()
                .ok_or_else(|| GeomagError::parse(loc(), format!("expected {nv} vertices")))?;
            let xs: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| GeomagError::parse(loc(), format!("line {i}: bad vertex: {e}")))?;
            if xs.len() != 3 {
                return Err(GeomagError::parse(loc(), format!("line {i}: vertex needs 3 coordinates")));
            }
            vertices.push(Vector3::new(xs[0], xs[1], xs[2]));
        }
        let mut triangles = Vec::with_capacity(nf);
        for _ in 0..nf {
            let (i, l) = lines
                .next()
                .ok_or_else(|| GeomagError::parse(loc(), format!("expected {nf} faces")))?;
            let ids: Vec<usize> = l
                .split_whitespace()
                .map(|t| t.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| GeomagError::parse(loc(), format!("line {i}: bad face: {e}")))?;
            if ids.len() != 4 || ids[0] != 3 {
                return Err(GeomagError::parse(loc(), format!("line {i}: only triangles `3 i j k` are supported")));
            }
            triangles.push([ids[1], ids[2], ids[3]]);
        }
        if let Some((i, _)) = lines.next() {
            return Err(GeomagError::parse(loc(), format!("line {i}: trailing content after faces")));
        }
        TriMesh::new(vertices, triangles)
    }

    pub fn to_off(&self) -> String {
        let mut s = format!("OFF\n{} {} 0\n", self.vertices.len(), self.triangles.len());
        for v in &self.vertices {
            let _ = writeln!(s, "{:?} {:?} {:?}", v[0], v[1], v[2]);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
        }
        s
    }

    /// Uniformly scaled copy about the origin.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s > 0.0) {
            return Err(GeomagError::domain("scale factor must be positive"));
        }
        let mut m = self.clone();
        for v in &mut m.vertices {
            *v *= s;
        }
        m.compute_geometry()?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn centroids(&self) -> &[Vec3] {
        &self.centroids
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn panel(&self, k: usize) -> [Vec3; 3] {
        self.triangles[k].map(|i| self.vertices[i])
    }

    pub fn was_flipped(&self) -> bool {
        self.flipped
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    /// Enclosed volume, `(1/3) int x . nu ds`.
    pub fn volume(&self) -> f64 {
        self.centroids
            .iter()
            .zip(&self.normals)
            .zip(&self.areas)
            .map(|((c, n), a)| c.dot(n) * a)
            .sum::<f64>()
            / 3.0
    }

    /// Longest edge over all panels.
    pub fn max_panel_diameter(&self) -> f64 {
        (0..self.len())
            .map(|k| panel_diameter(&self.panel(k)))
            .fold(0.0, f64::max)
    }
}

pub(crate) fn panel_diameter(p: &[Vec3; 3]) -> f64 {
    (p[0] - p[1]).norm().max((p[1] - p[2]).norm()).max((p[2] - p[0]).norm())
}

fn check_closed(triangles: &[[usize; 3]]) -> Result<()> {
    let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
    for t in triangles {
        for k in 0..3 {
            *directed.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
        }
    }
    for (&(a, b), &count) in &directed {
        let back = directed.get(&(b, a)).copied().unwrap_or(0);
        if count + back != 2 {
            return Err(GeomagError::OpenSurface(a.min(b), a.max(b)));
        }
        if count != 1 {
            return Err(GeomagError::Mesh(format!(
                "inconsistent triangle orientation across edge ({a}, {b})"
            )));
        }
    }
    Ok(())
}
