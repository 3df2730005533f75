use nalgebra::{Vector2, Vector3};

use crate::mesh::TriMesh;
use crate::sparse::{CsrMatrix, TripletBuilder};

/// Cotangent of the angle at `o` in triangle (a, b, o).
pub fn cot_at(o: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let u = a - o;
    let v = b - o;
    u.dot(&v) / u.cross(&v).norm()
}

/// Edge weights (i, j, ½cot θ) contributed by each face, three per face.
pub fn cotan_half_weights(faces: &[[usize; 3]], pos: &[Vector3<f64>]) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::with_capacity(faces.len() * 3);
    for f in faces {
        for k in 0..3 {
            let (i, j, o) = (f[k], f[(k + 1) % 3], f[(k + 2) % 3]);
            out.push((i, j, 0.5 * cot_at(&pos[o], &pos[i], &pos[j])));
        }
    }
    out
}

/// Positive semidefinite stiffness matrix Σ w_ij (x_i − x_j)².
pub fn cotan_stiffness(faces: &[[usize; 3]], pos: &[Vector3<f64>]) -> CsrMatrix {
    let mut b = TripletBuilder::with_capacity(pos.len(), faces.len() * 12);
    for (i, j, w) in cotan_half_weights(faces, pos) {
        b.add(i, i, w);
        b.add(j, j, w);
        b.add(i, j, -w);
        b.add(j, i, -w);
    }
    b.build()
}

pub fn cotan_stiffness_planar(faces: &[[usize; 3]], uv: &[Vector2<f64>]) -> CsrMatrix {
    let pos: Vec<Vector3<f64>> = uv.iter().map(|p| Vector3::new(p.x, p.y, 0.0)).collect();
    cotan_stiffness(faces, &pos)
}

/// Cotangent Laplacian: off-diagonal w_ij = (cot α + cot β)/2, rows sum to zero.
pub fn cotan_laplacian(mesh: &TriMesh) -> CsrMatrix {
    let mut b = TripletBuilder::with_capacity(mesh.num_vertices(), mesh.num_faces() * 12);
    for (i, j, w) in cotan_half_weights(mesh.faces(), mesh.vertices()) {
        b.add(i, i, -w);
        b.add(j, j, -w);
        b.add(i, j, w);
        b.add(j, i, w);
    }
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equilateral_pair_weight() {
        let h = 3f64.sqrt() / 2.0;
        let verts = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.5, h, 0.0),
            Vector3::new(0.5, -h, 0.0),
        ];
        let m = TriMesh::new(verts, vec![[0, 1, 2], [1, 0, 3]]).unwrap();
        let l = cotan_laplacian(&m);
        assert!((l.get(0, 1) - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((l.get(1, 0) - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        // boundary edge (1,2) sees a single 60° angle
        assert!((l.get(1, 2) - 0.5 / 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn square_grid_is_five_point_stencil() {
        let n = 4;
        let mut verts = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                verts.push(Vector3::new(i as f64, j as f64, 0.0));
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut faces = Vec::new();
        for j in 0..n {
            for i in 0..n {
                faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        let l = cotan_laplacian(&TriMesh::new(verts, faces).unwrap());
        let c = id(2, 2);
        assert!((l.get(c, c) + 4.0).abs() < 1e-14);
        for nb in [id(1, 2), id(3, 2), id(2, 1), id(2, 3)] {
            assert!((l.get(c, nb) - 1.0).abs() < 1e-14);
        }
        // diagonal neighbours carry cot 90° = 0
        assert!(l.get(c, id(3, 3)).abs() < 1e-14);
        let ones = vec![1.0; l.dim()];
        assert!(l.mul_vec(&ones).iter().all(|r| r.abs() < 1e-12));
    }
}
