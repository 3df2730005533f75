//! Triangle meshes with disk topology, landmarks and datasets.
//!
//! A [`TriMesh`] is validated on construction: faces must be non-degenerate,
//! the surface must be an oriented manifold with exactly one boundary loop and
//! Euler characteristic one. The boundary loop is stored in the direction that
//! keeps the surface interior on its left.

mod dataset;
mod io;

use std::collections::HashMap;

use nalgebra::Vector3;
use serde::Serialize;

use crate::error::{Error, Result};

pub use dataset::{load_manifest, write_manifest, Dataset, Subject};
pub use io::{
    load_landmarks, load_mesh, parse_landmarks, parse_obj, parse_ply, write_landmarks, write_obj,
    write_planar_obj,
};

/// Relative area threshold below which a face counts as degenerate.
pub const DEGENERATE_AREA_FACTOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[usize; 3]>,
    boundary: Vec<usize>,
    on_boundary: Vec<bool>,
    num_edges: usize,
}

impl TriMesh {
    /// Builds and validates a disk-topology mesh.
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                if v >= n {
                    return Err(Error::InvalidFace {
                        face: fi,
                        reason: format!("vertex index {v} out of range ({n} vertices)"),
                    });
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidFace {
                    face: fi,
                    reason: format!("repeated vertex in {f:?}"),
                });
            }
        }

        let diag = bbox_diagonal(&vertices);
        let min_area = DEGENERATE_AREA_FACTOR * diag * diag;
        for (fi, f) in faces.iter().enumerate() {
            let area = triangle_area(&vertices[f[0]], &vertices[f[1]], &vertices[f[2]]);
            if !(area >= min_area) || area == 0.0 {
                return Err(Error::DegenerateFace { face: fi, area });
            }
        }

        let mut used = vec![false; n];
        for f in &faces {
            for &v in f {
                used[v] = true;
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::NonManifold(format!("vertex {v} is not referenced by any face")));
        }

        // directed half-edges; a repeated direction means inconsistent orientation
        let mut half_edges: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 3);
        for (fi, f) in faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                if half_edges.insert((a, b), fi).is_some() {
                    return Err(Error::NonManifold(format!(
                        "edge ({a}, {b}) is shared by more than two faces or faces are inconsistently oriented"
                    )));
                }
            }
        }
        let mut num_edges = 0usize;
        let mut boundary_next: HashMap<usize, usize> = HashMap::new();
        for &(a, b) in half_edges.keys() {
            if half_edges.contains_key(&(b, a)) {
                if a < b {
                    num_edges += 1;
                }
            } else {
                num_edges += 1;
                if boundary_next.insert(a, b).is_some() {
                    return Err(Error::NonManifold(format!(
                        "vertex {a} has more than one outgoing boundary edge"
                    )));
                }
            }
        }

        let loops = boundary_loops(&boundary_next);
        if loops.len() > 1 {
            return Err(Error::BoundaryLoops { count: loops.len() });
        }
        let euler = n as i64 - num_edges as i64 + faces.len() as i64;
        if euler != 1 {
            return Err(Error::NotDisk { euler });
        }
        let boundary = loops.into_iter().next().ok_or(Error::BoundaryLoops { count: 0 })?;

        let mut on_boundary = vec![false; n];
        for &b in &boundary {
            on_boundary[b] = true;
        }

        Ok(Self {
            vertices,
            faces,
            boundary,
            on_boundary,
            num_edges,
        })
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> Vector3<f64> {
        self.vertices[v]
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Boundary loop, interior on the left.
    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.on_boundary[v]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.on_boundary
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.num_vertices() as i64 - self.num_edges as i64 + self.num_faces() as i64
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f];
        triangle_area(&self.vertices[a], &self.vertices[b], &self.vertices[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_faces()).map(|f| self.face_area(f)).sum()
    }

    pub fn bbox_diagonal(&self) -> f64 {
        bbox_diagonal(&self.vertices)
    }

    /// Same connectivity with new vertex positions.
    pub fn with_positions(&self, vertices: Vec<Vector3<f64>>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::Dimension(format!(
                "expected {} positions, got {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        Self::new(vertices, self.faces.clone())
    }

    /// Applies `f` to every vertex position, keeping connectivity.
    pub fn map_positions(&self, f: impl Fn(&Vector3<f64>) -> Vector3<f64>) -> Result<Self> {
        self.with_positions(self.vertices.iter().map(f).collect())
    }

    /// Sorted one-ring neighbours of every vertex.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nbrs = vec![Vec::new(); self.num_vertices()];
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                nbrs[a].push(b);
                nbrs[b].push(a);
            }
        }
        for list in &mut nbrs {
            list.sort_unstable();
            list.dedup();
        }
        nbrs
    }

    /// Faces sharing an edge with each face.
    pub fn face_neighbors(&self) -> Vec<Vec<usize>> {
        let mut edge_faces: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (fi, f) in self.faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                edge_faces.entry((a.min(b), a.max(b))).or_default().push(fi);
            }
        }
        let mut nbrs = vec![Vec::new(); self.num_faces()];
        for faces in edge_faces.values() {
            if let [f0, f1] = faces[..] {
                nbrs[f0].push(f1);
                nbrs[f1].push(f0);
            }
        }
        for list in &mut nbrs {
            list.sort_unstable();
        }
        nbrs
    }

    /// Faces incident to each vertex.
    pub fn vertex_faces(&self) -> Vec<Vec<usize>> {
        let mut vf = vec![Vec::new(); self.num_vertices()];
        for (fi, f) in self.faces.iter().enumerate() {
            for &v in f {
                vf[v].push(fi);
            }
        }
        vf
    }

    /// Ratio 4√3·A / Σ|e|², equal to one for an equilateral triangle.
    pub fn min_triangle_quality(&self) -> f64 {
        self.faces
            .iter()
            .map(|&[a, b, c]| {
                let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
                let area = triangle_area(&pa, &pb, &pc);
                let sq = (pb - pa).norm_squared() + (pc - pb).norm_squared() + (pa - pc).norm_squared();
                4.0 * 3f64.sqrt() * area / sq
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn boundary_perimeter(&self) -> f64 {
        let b = &self.boundary;
        (0..b.len())
            .map(|k| (self.vertices[b[(k + 1) % b.len()]] - self.vertices[b[k]]).norm())
            .sum()
    }

    /// Index of the vertex nearest to `p`, ties broken by smaller index.
    pub fn nearest_vertex(&self, p: &Vector3<f64>) -> (usize, f64) {
        nearest_in(self.vertices.iter().copied().enumerate(), p)
    }

    /// Position of `v` within the boundary loop.
    pub fn boundary_position(&self, v: usize) -> Option<usize> {
        self.boundary.iter().position(|&b| b == v)
    }
}

pub(crate) fn nearest_in(
    candidates: impl Iterator<Item = (usize, Vector3<f64>)>,
    p: &Vector3<f64>,
) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, q) in candidates {
        let d = (q - p).norm();
        if d < best.1 || (d == best.1 && i < best.0) {
            best = (i, d);
        }
    }
    best
}

fn boundary_loops(next: &HashMap<usize, usize>) -> Vec<Vec<usize>> {
    let mut starts: Vec<usize> = next.keys().copied().collect();
    starts.sort_unstable();
    let mut visited = std::collections::HashSet::new();
    let mut loops = Vec::new();
    for s in starts {
        if visited.contains(&s) {
            continue;
        }
        let mut cycle = Vec::new();
        let mut v = s;
        loop {
            visited.insert(v);
            cycle.push(v);
            match next.get(&v) {
                Some(&w) if w == s => break,
                Some(&w) if !visited.contains(&w) => v = w,
                _ => break,
            }
        }
        loops.push(cycle);
    }
    loops
}

pub fn triangle_area(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

fn bbox_diagonal(vertices: &[Vector3<f64>]) -> f64 {
    if vertices.is_empty() {
        return 0.0;
    }
    let mut lo = vertices[0];
    let mut hi = vertices[0];
    for v in vertices {
        lo = lo.inf(v);
        hi = hi.sup(v);
    }
    (hi - lo).norm()
}

/// Ordered vertex indices marking corresponding anatomical points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LandmarkSet {
    indices: Vec<usize>,
    snap_distances: Vec<f64>,
}

impl LandmarkSet {
    pub fn new(indices: Vec<usize>, num_vertices: usize) -> Result<Self> {
        let snap = vec![0.0; indices.len()];
        Self::with_snap(indices, snap, num_vertices)
    }

    pub(crate) fn with_snap(indices: Vec<usize>, snap_distances: Vec<f64>, num_vertices: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyLandmarks);
        }
        for (k, &i) in indices.iter().enumerate() {
            if i >= num_vertices {
                return Err(Error::LandmarkOutOfRange {
                    index: i,
                    vertices: num_vertices,
                });
            }
            if indices[..k].contains(&i) {
                return Err(Error::DuplicateLandmark { vertex: i });
            }
        }
        Ok(Self {
            indices,
            snap_distances,
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Euclidean distance between each landmark point and the vertex it snapped to.
    pub fn snap_distances(&self) -> &[f64] {
        &self.snap_distances
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeshStats {
    pub vertices: usize,
    pub faces: usize,
    pub edges: usize,
    pub min_triangle_quality: f64,
    pub boundary_vertices: usize,
    pub boundary_length: f64,
}

impl MeshStats {
    pub fn of(mesh: &TriMesh) -> Self {
        Self {
            vertices: mesh.num_vertices(),
            faces: mesh.num_faces(),
            edges: mesh.num_edges(),
            min_triangle_quality: mesh.min_triangle_quality(),
            boundary_vertices: mesh.boundary().len(),
            boundary_length: mesh.boundary_perimeter(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairDiagnostics {
    #[serde(rename = "match")]
    pub matched: bool,
    pub landmarks: usize,
    pub source: MeshStats,
    pub target: MeshStats,
}

/// Checks that two landmarked meshes can be registered against each other.
///
/// Meshes are validated on construction, so this re-checks the landmark
/// indices and Euler characteristic and collects statistics.
pub fn validate_pair(
    mesh_i: &TriMesh,
    lm_i: &LandmarkSet,
    mesh_j: &TriMesh,
    lm_j: &LandmarkSet,
) -> Result<PairDiagnostics> {
    if lm_i.len() != lm_j.len() {
        return Err(Error::LandmarkCountMismatch {
            left: lm_i.len(),
            right: lm_j.len(),
        });
    }
    for (mesh, lm) in [(mesh_i, lm_i), (mesh_j, lm_j)] {
        LandmarkSet::new(lm.indices().to_vec(), mesh.num_vertices())?;
        if mesh.euler_characteristic() != 1 {
            return Err(Error::NotDisk {
                euler: mesh.euler_characteristic(),
            });
        }
    }
    Ok(PairDiagnostics {
        matched: true,
        landmarks: lm_i.len(),
        source: MeshStats::of(mesh_i),
        target: MeshStats::of(mesh_j),
    })
}
