use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::laplacian::cot_at;
use crate::error::{Error, Result};
use crate::mesh::TriMesh;

/// Tolerance on barycentric coordinates for interpolation.
pub const BARY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureField {
    /// Mean curvature, positive where the surface bends away from its
    /// outward normal (a sphere with outward normals has H > 0).
    pub h: Vec<f64>,
    pub k: Vec<f64>,
    /// Mixed Voronoi area.
    pub area: Vec<f64>,
    /// Boundary vertices, whose one-ring estimates are biased.
    pub low_confidence: Vec<bool>,
}

impl CurvatureField {
    /// Σ K·area, which already folds in the boundary turning angles.
    pub fn total_curvature(&self) -> f64 {
        self.k.iter().zip(&self.area).map(|(k, a)| k * a).sum()
    }

    /// `vertex_index,H,K,area` CSV.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("vertex_index,H,K,area\n");
        for i in 0..self.h.len() {
            let _ = writeln!(s, "{i},{},{},{}", self.h[i], self.k[i], self.area[i]);
        }
        s
    }
}

fn angle(o: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let u = a - o;
    let v = b - o;
    u.cross(&v).norm().atan2(u.dot(&v))
}

/// 2π − Σθ at interior vertices, π − Σθ at boundary vertices.
pub fn angle_defects(mesh: &TriMesh) -> Vec<f64> {
    let v = mesh.vertices();
    let mut sum = vec![0.0; mesh.num_vertices()];
    for f in mesh.faces() {
        for k in 0..3 {
            let (o, a, b) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
            sum[o] += angle(&v[o], &v[a], &v[b]);
        }
    }
    sum.iter()
        .enumerate()
        .map(|(i, s)| if mesh.is_boundary(i) { PI - s } else { 2.0 * PI - s })
        .collect()
}

/// Total discrete curvature; equals 2π for any disk-topology mesh.
pub fn gauss_bonnet_total(mesh: &TriMesh) -> f64 {
    angle_defects(mesh).iter().sum()
}

/// Mixed Voronoi areas with the barycentric split on obtuse faces.
pub fn mixed_areas(mesh: &TriMesh) -> Vec<f64> {
    let v = mesh.vertices();
    let mut area = vec![0.0; mesh.num_vertices()];
    for f in mesh.faces() {
        let p = [v[f[0]], v[f[1]], v[f[2]]];
        let fa = 0.5 * (p[1] - p[0]).cross(&(p[2] - p[0])).norm();
        let ang: [f64; 3] = std::array::from_fn(|k| angle(&p[k], &p[(k + 1) % 3], &p[(k + 2) % 3]));
        let obtuse = ang.iter().position(|&a| a > PI / 2.0);
        for k in 0..3 {
            let (i, j, l) = (k, (k + 1) % 3, (k + 2) % 3);
            area[f[i]] += match obtuse {
                Some(o) if o == i => fa / 2.0,
                Some(_) => fa / 4.0,
                None => {
                    0.125
                        * ((p[j] - p[i]).norm_squared() * cot_at(&p[l], &p[i], &p[j])
                            + (p[l] - p[i]).norm_squared() * cot_at(&p[j], &p[i], &p[l]))
                }
            };
        }
    }
    area
}

/// Angle-defect Gaussian curvature and cotangent mean curvature.
pub fn curvatures(mesh: &TriMesh) -> CurvatureField {
    let v = mesh.vertices();
    let n = mesh.num_vertices();
    let area = mixed_areas(mesh);
    let defect = angle_defects(mesh);
    let mut lap = vec![Vector3::zeros(); n];
    let mut normal = vec![Vector3::zeros(); n];
    for f in mesh.faces() {
        let fn_ = (v[f[1]] - v[f[0]]).cross(&(v[f[2]] - v[f[0]]));
        for k in 0..3 {
            let (i, j, o) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
            let w = 0.5 * cot_at(&v[o], &v[i], &v[j]);
            let d = v[j] - v[i];
            lap[i] += w * d;
            lap[j] -= w * d;
            normal[f[k]] += fn_;
        }
    }
    let h = (0..n)
        .map(|i| {
            let mag = lap[i].norm() / (2.0 * area[i]);
            if -lap[i].dot(&normal[i]) >= 0.0 {
                mag
            } else {
                -mag
            }
        })
        .collect();
    let k = (0..n).map(|i| defect[i] / area[i]).collect();
    CurvatureField {
        h,
        k,
        area,
        low_confidence: mesh.boundary_mask().to_vec(),
    }
}

/// Replaces each boundary value by the mean over its interior neighbours.
pub fn boundary_corrected(mesh: &TriMesh, values: &[f64]) -> Vec<f64> {
    let nbrs = mesh.vertex_neighbors();
    (0..values.len())
        .map(|i| {
            if !mesh.is_boundary(i) {
                return values[i];
            }
            let inner: Vec<f64> = nbrs[i].iter().filter(|&&j| !mesh.is_boundary(j)).map(|&j| values[j]).collect();
            if inner.is_empty() {
                values[i]
            } else {
                inner.iter().sum::<f64>() / inner.len() as f64
            }
        })
        .collect()
}

/// A point on a triangle mesh in barycentric form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfacePoint {
    pub face: usize,
    pub bary: [f64; 3],
}

impl SurfacePoint {
    pub fn position(&self, mesh: &TriMesh) -> Vector3<f64> {
        let f = mesh.faces()[self.face];
        let v = mesh.vertices();
        self.bary[0] * v[f[0]] + self.bary[1] * v[f[1]] + self.bary[2] * v[f[2]]
    }
}

/// Barycentric interpolation of a per-vertex field at surface points.
pub fn interpolate_scalar(mesh: &TriMesh, field: &[f64], points: &[SurfacePoint]) -> Result<Vec<f64>> {
    points
        .iter()
        .map(|p| {
            if p.face >= mesh.num_faces() {
                return Err(Error::InvalidFace {
                    face: p.face,
                    reason: "face index out of range".into(),
                });
            }
            if p.bary.iter().any(|&b| !(-BARY_TOL..=1.0 + BARY_TOL).contains(&b)) {
                return Err(Error::BadBarycentric { bary: p.bary });
            }
            let f = mesh.faces()[p.face];
            Ok(p.bary[0] * field[f[0]] + p.bary[1] * field[f[1]] + p.bary[2] * field[f[2]])
        })
        .collect()
}
