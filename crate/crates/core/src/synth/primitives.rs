//! Analytic test surfaces: planar grids, lattice caps and cylinders.

use std::f64::consts::PI;

use nalgebra::{Vector2, Vector3};

use crate::error::Result;
use crate::mesh::TriMesh;

/// Connectivity of a disk made of concentric rings around a centre vertex.
///
/// Vertex 0 is the centre; ring `k` (1-based) holds `counts[k-1]` vertices.
/// Returns (ring index, angle) for every vertex and the CCW faces. Odd rings
/// are rotated by half a step so neighbouring rings interleave.
pub fn ring_disk(counts: &[usize]) -> (Vec<(usize, f64)>, Vec<[usize; 3]>) {
    let mut polar = vec![(0usize, 0.0)];
    let mut first = vec![0usize];
    for (k, &n) in counts.iter().enumerate() {
        first.push(polar.len());
        let off = if (k + 1) % 2 == 1 { 0.5 } else { 0.0 };
        for i in 0..n {
            polar.push((k + 1, 2.0 * PI * (i as f64 + off) / n as f64));
        }
    }
    let mut faces = Vec::new();
    if let Some(&n1) = counts.first() {
        for j in 0..n1 {
            faces.push([0, first[1] + j, first[1] + (j + 1) % n1]);
        }
    }
    for k in 1..counts.len() {
        let (n_in, n_out) = (counts[k - 1], counts[k]);
        let (b_in, b_out) = (first[k], first[k + 1]);
        let ang = |base: usize, n: usize, i: usize| polar[base + i % n].1 + 2.0 * PI * (i / n) as f64;
        let (mut i, mut j) = (0usize, 0usize);
        // align the outer sequence so it starts at or after the first inner angle
        let a0 = polar[b_in].1;
        let mut shift = 0usize;
        while shift < n_out && ang(b_out, n_out, shift) < a0 - PI / n_out as f64 {
            shift += 1;
        }
        while i < n_in || j < n_out {
            let advance_outer = if i == n_in {
                true
            } else if j == n_out {
                false
            } else {
                ang(b_out, n_out, j + 1 + shift) < ang(b_in, n_in, i + 1)
            };
            let ii = b_in + i % n_in;
            let oj = b_out + (j + shift) % n_out;
            if advance_outer {
                faces.push([ii, oj, b_out + (j + 1 + shift) % n_out]);
                j += 1;
            } else {
                faces.push([ii, oj, b_in + (i + 1) % n_in]);
                i += 1;
            }
        }
    }
    (polar, faces)
}

/// Planar grid on [0,w]×[0,h] with `nx`×`ny` cells split along one diagonal.
pub fn rect_grid(nx: usize, ny: usize, w: f64, h: f64) -> TriMesh {
    let mut verts = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            verts.push(Vector3::new(w * i as f64 / nx as f64, h * j as f64 / ny as f64, 0.0));
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut faces = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    TriMesh::new(verts, faces).expect("grid is a valid disk")
}

/// Corner vertex indices of [`rect_grid`] in CCW order from the origin.
pub fn rect_grid_corners(nx: usize, ny: usize) -> [usize; 4] {
    [0, nx, (ny + 1) * (nx + 1) - 1, ny * (nx + 1)]
}

pub fn unit_square(n: usize) -> TriMesh {
    rect_grid(n, n, 1.0, 1.0)
}

/// Flat unit disk built from `rings` concentric rings of roughly equal spacing.
pub fn planar_disk(rings: usize) -> TriMesh {
    let counts: Vec<usize> = (1..=rings).map(|k| 6 * k).collect();
    let (polar, faces) = ring_disk(&counts);
    let verts = polar
        .iter()
        .map(|&(k, t)| {
            let r = k as f64 / rings as f64;
            Vector3::new(r * t.cos(), r * t.sin(), 0.0)
        })
        .collect();
    TriMesh::new(verts, faces).expect("ring disk is valid")
}

/// Hexagon of a regular triangular lattice: `n` rings around the origin.
pub fn hex_lattice(n: usize, spacing: f64) -> (Vec<Vector2<f64>>, Vec<[usize; 3]>) {
    let n = n as i64;
    let mut index = std::collections::HashMap::new();
    let mut pts = Vec::new();
    for r in -n..=n {
        for q in -n..=n {
            if (q + r).abs() <= n {
                index.insert((q, r), pts.len());
                let x = spacing * (q as f64 + 0.5 * r as f64);
                let y = spacing * r as f64 * 3f64.sqrt() / 2.0;
                pts.push(Vector2::new(x, y));
            }
        }
    }
    let mut faces = Vec::new();
    for r in -n..=n {
        for q in -n..=n {
            let get = |a: i64, b: i64| index.get(&(a, b)).copied();
            if let (Some(a), Some(b), Some(c)) = (get(q, r), get(q + 1, r), get(q, r + 1)) {
                faces.push([a, b, c]);
            }
            if let (Some(a), Some(b), Some(c)) = (get(q + 1, r), get(q + 1, r + 1), get(q, r + 1)) {
                faces.push([a, b, c]);
            }
        }
    }
    (pts, faces)
}

/// Unit-sphere cap around the north pole, angular radius `n·edge`, built by
/// wrapping a hexagonal lattice with the azimuthal equidistant projection.
pub fn sphere_cap(n: usize, edge: f64) -> Result<TriMesh> {
    let (pts, faces) = hex_lattice(n, edge);
    let verts = pts
        .iter()
        .map(|p| {
            let rho = p.norm();
            if rho == 0.0 {
                return Vector3::new(0.0, 0.0, 1.0);
            }
            let d = p / rho;
            Vector3::new(rho.sin() * d.x, rho.sin() * d.y, rho.cos())
        })
        .collect();
    TriMesh::new(verts, faces)
}

/// Cylinder patch of radius `r` wrapped isometrically from a lattice; outward normals.
pub fn cylinder_patch(n: usize, edge: f64, r: f64) -> Result<TriMesh> {
    let (pts, faces) = hex_lattice(n, edge);
    let verts = pts
        .iter()
        .map(|p| Vector3::new(r * (p.x / r).cos(), r * (p.x / r).sin(), p.y))
        .collect();
    TriMesh::new(verts, faces)
}

/// Unit hemisphere (z ≥ 0) with rings of near-constant spacing `edge`.
pub fn hemisphere(edge: f64) -> Result<TriMesh> {
    let rings = ((PI / 2.0) / edge).ceil() as usize;
    let phi = |k: usize| (PI / 2.0) * k as f64 / rings as f64;
    let counts: Vec<usize> = (1..=rings)
        .map(|k| ((2.0 * PI * phi(k).sin() / edge).round() as usize).max(6))
        .collect();
    let (polar, faces) = ring_disk(&counts);
    let verts = polar
        .iter()
        .map(|&(k, t)| {
            let p = phi(k);
            Vector3::new(p.sin() * t.cos(), p.sin() * t.sin(), p.cos())
        })
        .collect();
    TriMesh::new(verts, faces)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_disk_is_valid() {
        for counts in [vec![6, 12, 18], vec![6, 11, 17, 23], vec![5, 9, 16, 20, 27]] {
            let (polar, faces) = ring_disk(&counts);
            let verts = polar.iter().map(|&(k, t)| Vector3::new(k as f64 * t.cos(), k as f64 * t.sin(), 0.0)).collect();
            let m = TriMesh::new(verts, faces).unwrap();
            assert_eq!(m.boundary().len(), *counts.last().unwrap());
            let flips = crate::diffgeo::count_flips(
                m.faces(),
                &m.vertices().iter().map(|p| Vector2::new(p.x, p.y)).collect::<Vec<_>>(),
            );
            assert_eq!(flips, 0);
        }
    }

    #[test]
    fn lattice_counts() {
        let (pts, faces) = hex_lattice(3, 1.0);
        assert_eq!(pts.len(), 37);
        assert_eq!(faces.len(), 54);
    }

    #[test]
    fn primitives_are_disks() {
        assert_eq!(unit_square(4).euler_characteristic(), 1);
        assert_eq!(planar_disk(5).euler_characteristic(), 1);
        assert_eq!(sphere_cap(6, 0.05).unwrap().euler_characteristic(), 1);
        assert_eq!(cylinder_patch(6, 0.05, 2.0).unwrap().euler_characteristic(), 1);
        let h = hemisphere(0.1).unwrap();
        assert!(h.boundary().iter().all(|&b| h.vertex(b).z.abs() < 1e-12));
    }

    #[test]
    fn grid_corners() {
        let m = rect_grid(4, 2, 2.0, 1.0);
        let c = rect_grid_corners(4, 2);
        assert_eq!(m.vertex(c[1]), Vector3::new(2.0, 0.0, 0.0));
        assert_eq!(m.vertex(c[2]), Vector3::new(2.0, 1.0, 0.0));
        assert_eq!(m.vertex(c[3]), Vector3::new(0.0, 1.0, 0.0));
    }
}
