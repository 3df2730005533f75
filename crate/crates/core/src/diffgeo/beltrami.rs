use nalgebra::{Vector2, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::TriMesh;

/// Denominator magnitude below which a composition is rejected.
pub const COMPOSITION_EPS: f64 = 1e-14;

/// Per-face Beltrami coefficients of a piecewise-linear map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeltramiField {
    #[serde(with = "complex_vec")]
    pub mu: Vec<Complex64>,
    /// Faces with |μ| ≥ 1 (folded or reflected).
    pub folds: Vec<usize>,
}

impl BeltramiField {
    pub fn from_mu(mu: Vec<Complex64>) -> Self {
        let folds = fold_list(&mu);
        Self { mu, folds }
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_mu(vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn moduli(&self) -> Vec<f64> {
        self.mu.iter().map(|m| m.norm()).collect()
    }

    pub fn max_modulus(&self) -> f64 {
        self.mu.iter().map(|m| m.norm()).fold(0.0, f64::max)
    }

    /// Weighted mean of |μ|; unweighted if `weights` is `None`.
    pub fn mean_modulus(&self, weights: Option<&[f64]>) -> f64 {
        weighted_mean_std(&self.moduli(), weights).0
    }
}

pub(crate) fn fold_list(mu: &[Complex64]) -> Vec<usize> {
    mu.iter()
        .enumerate()
        .filter(|(_, m)| !(m.norm() < 1.0))
        .map(|(i, _)| i)
        .collect()
}

/// Weighted mean and standard deviation.
pub fn weighted_mean_std(x: &[f64], w: Option<&[f64]>) -> (f64, f64) {
    if x.is_empty() {
        return (0.0, 0.0);
    }
    let (sw, sx) = match w {
        Some(w) => (w.iter().sum::<f64>(), x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>()),
        None => (x.len() as f64, x.iter().sum::<f64>()),
    };
    let mean = sx / sw;
    let var = match w {
        Some(w) => x.iter().zip(w).map(|(a, b)| b * (a - mean).powi(2)).sum::<f64>() / sw,
        None => x.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / sw,
    };
    (mean, var.max(0.0).sqrt())
}

/// Wirtinger derivatives (f_z, f_z̄) of the affine map taking triangle
/// `s` to triangle `t`.
pub fn affine_wirtinger(s: [Complex64; 3], t: [Complex64; 3]) -> (Complex64, Complex64) {
    let e1 = s[1] - s[0];
    let e2 = s[2] - s[0];
    let d1 = t[1] - t[0];
    let d2 = t[2] - t[0];
    let det = e1 * e2.conj() - e2 * e1.conj();
    let a = (d1 * e2.conj() - d2 * e1.conj()) / det;
    let b = (e1 * d2 - e2 * d1) / det;
    (a, b)
}

fn c(p: &Vector2<f64>) -> Complex64 {
    Complex64::new(p.x, p.y)
}

/// Per-face (f_z, f_z̄) of the PL map `source → target` over `faces`.
pub fn map_derivatives(
    faces: &[[usize; 3]],
    source: &[Vector2<f64>],
    target: &[Vector2<f64>],
) -> Result<Vec<(Complex64, Complex64)>> {
    if source.len() != target.len() {
        return Err(Error::Dimension(format!(
            "source has {} vertices, target {}",
            source.len(),
            target.len()
        )));
    }
    faces
        .iter()
        .enumerate()
        .map(|(fi, f)| {
            let s = [c(&source[f[0]]), c(&source[f[1]]), c(&source[f[2]])];
            let t = [c(&target[f[0]]), c(&target[f[1]]), c(&target[f[2]])];
            let (a, b) = affine_wirtinger(s, t);
            if a.norm() == 0.0 || !a.is_finite() || !b.is_finite() {
                return Err(Error::CollapsedFace { face: fi });
            }
            Ok((a, b))
        })
        .collect()
}

/// Beltrami coefficient of a planar PL map.
pub fn beltrami_from_map(
    faces: &[[usize; 3]],
    source: &[Vector2<f64>],
    target: &[Vector2<f64>],
) -> Result<BeltramiField> {
    let d = map_derivatives(faces, source, target)?;
    Ok(BeltramiField::from_mu(d.into_iter().map(|(a, b)| b / a).collect()))
}

/// Isometric layout of a 3D triangle in its own plane: the first vertex at
/// the origin and the first edge along the positive real axis.
pub fn local_frame(p: [Vector3<f64>; 3]) -> [Complex64; 3] {
    let e1 = p[1] - p[0];
    let e2 = p[2] - p[0];
    let l1 = e1.norm();
    let x = e1 / l1;
    let n = e1.cross(&e2);
    let y = n.cross(&x).normalize();
    [
        Complex64::new(0.0, 0.0),
        Complex64::new(l1, 0.0),
        Complex64::new(e2.dot(&x), e2.dot(&y)),
    ]
}

/// Beltrami coefficient of a surface-to-plane PL map, each face measured in
/// its local isometric frame. |μ| does not depend on the frame.
pub fn beltrami_from_surface(mesh: &TriMesh, target: &[Vector2<f64>]) -> Result<BeltramiField> {
    if target.len() != mesh.num_vertices() {
        return Err(Error::Dimension(format!(
            "mesh has {} vertices, map {}",
            mesh.num_vertices(),
            target.len()
        )));
    }
    let v = mesh.vertices();
    let mu = mesh
        .faces()
        .iter()
        .enumerate()
        .map(|(fi, f)| {
            let s = local_frame([v[f[0]], v[f[1]], v[f[2]]]);
            let t = [c(&target[f[0]]), c(&target[f[1]]), c(&target[f[2]])];
            let (a, b) = affine_wirtinger(s, t);
            if a.norm() == 0.0 || !a.is_finite() {
                return Err(Error::CollapsedFace { face: fi });
            }
            Ok(b / a)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BeltramiField::from_mu(mu))
}

/// Beltrami coefficient of g∘f from μ_f, the per-face f_z of f and μ_g
/// sampled on the corresponding faces of f's image.
pub fn compose_beltrami(mu_f: &BeltramiField, f_z: &[Complex64], mu_g: &BeltramiField) -> Result<BeltramiField> {
    if mu_f.len() != f_z.len() || mu_f.len() != mu_g.len() {
        return Err(Error::Dimension("composition inputs differ in face count".into()));
    }
    let mu = mu_f
        .mu
        .iter()
        .zip(f_z)
        .zip(&mu_g.mu)
        .enumerate()
        .map(|(fi, ((&mf, &fz), &mg))| {
            let rot = fz.conj() / fz;
            let den = Complex64::new(1.0, 0.0) + rot * mf.conj() * mg;
            if den.norm() < COMPOSITION_EPS {
                return Err(Error::CompositionDenominator { face: fi });
            }
            Ok((mf + rot * mg) / den)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BeltramiField::from_mu(mu))
}

/// Signed area of every face of a planar embedding.
pub fn signed_areas(faces: &[[usize; 3]], uv: &[Vector2<f64>]) -> Vec<f64> {
    faces
        .iter()
        .map(|f| {
            let (a, b, c) = (uv[f[0]], uv[f[1]], uv[f[2]]);
            0.5 * ((b - a).x * (c - a).y - (b - a).y * (c - a).x)
        })
        .collect()
}

/// Number of faces with non-positive signed area.
pub fn count_flips(faces: &[[usize; 3]], uv: &[Vector2<f64>]) -> usize {
    signed_areas(faces, uv).iter().filter(|&&a| !(a > 0.0)).count()
}

mod complex_vec {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|c| [c.re, c.im]).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        let raw: Vec<[f64; 2]> = Vec::deserialize(d)?;
        Ok(raw.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize) -> (Vec<[usize; 3]>, Vec<Vector2<f64>>) {
        let mut uv = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                uv.push(Vector2::new(i as f64 / n as f64, j as f64 / n as f64));
            }
        }
        let mut faces = Vec::new();
        let id = |i: usize, j: usize| j * (n + 1) + i;
        for j in 0..n {
            for i in 0..n {
                faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        (faces, uv)
    }

    fn apply(uv: &[Vector2<f64>], m: [f64; 4], t: [f64; 2]) -> Vec<Vector2<f64>> {
        uv.iter()
            .map(|p| Vector2::new(m[0] * p.x + m[1] * p.y + t[0], m[2] * p.x + m[3] * p.y + t[1]))
            .collect()
    }

    /// Independent oracle: μ of a real-linear map from its Jacobian.
    fn jacobian_mu(m: [f64; 4]) -> Complex64 {
        let (ux, uy, vx, vy) = (m[0], m[1], m[2], m[3]);
        let fz = Complex64::new(ux + vy, vx - uy) * 0.5;
        let fzb = Complex64::new(ux - vy, vx + uy) * 0.5;
        fzb / fz
    }

    #[test]
    fn identity_is_conformal() {
        let (f, uv) = grid(4);
        let b = beltrami_from_map(&f, &uv, &uv).unwrap();
        assert!(b.mu.iter().all(|m| m.norm() == 0.0));
        assert!(b.folds.is_empty());
    }

    #[test]
    fn horizontal_stretch() {
        let (f, uv) = grid(5);
        let b = beltrami_from_map(&f, &uv, &apply(&uv, [2.0, 0.0, 0.0, 1.0], [0.0, 0.0])).unwrap();
        for m in &b.mu {
            assert!((m - Complex64::new(1.0 / 3.0, 0.0)).norm() < 1e-12);
        }
        let b = beltrami_from_map(&f, &uv, &apply(&uv, [1.0, 0.0, 0.0, 2.0], [0.0, 0.0])).unwrap();
        for m in &b.mu {
            assert!((m - Complex64::new(-1.0 / 3.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn stretch_composed_twice() {
        let (f, uv) = grid(3);
        let s = [2.0, 0.0, 0.0, 1.0];
        let img = apply(&uv, s, [0.0, 0.0]);
        let d = map_derivatives(&f, &uv, &img).unwrap();
        let mu_f = BeltramiField::from_mu(d.iter().map(|(a, b)| b / a).collect());
        let fz: Vec<_> = d.iter().map(|p| p.0).collect();
        let comp = compose_beltrami(&mu_f, &fz, &mu_f).unwrap();
        let direct = beltrami_from_map(&f, &uv, &apply(&uv, [4.0, 0.0, 0.0, 1.0], [0.0, 0.0])).unwrap();
        for (a, b) in comp.mu.iter().zip(&direct.mu) {
            assert!((a - Complex64::new(0.6, 0.0)).norm() < 1e-12);
            assert!((b - Complex64::new(0.6, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn flipped_face_is_flagged() {
        let (f, uv) = grid(3);
        let mut t = uv.clone();
        // push vertex (1,1) across its neighbours to fold its fan
        let v = 5;
        t[v] = Vector2::new(0.9, 0.9);
        let b = beltrami_from_map(&f, &uv, &t).unwrap();
        let flipped: Vec<usize> = signed_areas(&f, &t)
            .iter()
            .enumerate()
            .filter(|(_, a)| **a <= 0.0)
            .map(|(i, _)| i)
            .collect();
        assert!(!flipped.is_empty());
        assert_eq!(b.folds, flipped);
    }

    #[test]
    fn collapsed_face_errors() {
        let (f, uv) = grid(1);
        let t = vec![Vector2::new(0.0, 0.0); uv.len()];
        assert!(matches!(beltrami_from_map(&f, &uv, &t), Err(Error::CollapsedFace { .. })));
    }

    #[test]
    fn conformal_g_keeps_modulus() {
        let (f, uv) = grid(3);
        let img = apply(&uv, [1.3, 0.4, -0.2, 0.9], [0.1, 0.0]);
        let d = map_derivatives(&f, &uv, &img).unwrap();
        let mu_f = BeltramiField::from_mu(d.iter().map(|(a, b)| b / a).collect());
        let fz: Vec<_> = d.iter().map(|p| p.0).collect();
        let comp = compose_beltrami(&mu_f, &fz, &BeltramiField::zeros(f.len())).unwrap();
        for (a, b) in comp.mu.iter().zip(&mu_f.mu) {
            assert!((a.norm() - b.norm()).abs() < 1e-15);
        }
        let ident: Vec<_> = vec![Complex64::new(1.0, 0.0); f.len()];
        let mu_g = BeltramiField::from_mu(vec![Complex64::new(0.2, -0.1); f.len()]);
        let comp = compose_beltrami(&BeltramiField::zeros(f.len()), &ident, &mu_g).unwrap();
        assert_eq!(comp.mu, mu_g.mu);
    }

    #[test]
    fn surface_frame_matches_planar() {
        let (f, uv) = grid(3);
        let verts: Vec<Vector3<f64>> = uv.iter().map(|p| Vector3::new(p.x, p.y, 0.0)).collect();
        let mesh = TriMesh::new(verts, f.clone()).unwrap();
        let img = apply(&uv, [2.0, 0.3, 0.1, 1.0], [0.0, 0.0]);
        let a = beltrami_from_surface(&mesh, &img).unwrap();
        let b = beltrami_from_map(&f, &uv, &img).unwrap();
        for (x, y) in a.mu.iter().zip(&b.mu) {
            assert!((x.norm() - y.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn serde_round_trip() {
        let b = BeltramiField::from_mu(vec![Complex64::new(0.25, -0.5), Complex64::new(1.5, 0.0)]);
        let s = serde_json::to_string(&b).unwrap();
        let back: BeltramiField = serde_json::from_str(&s).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.folds, vec![1]);
    }

    fn matrix() -> impl Strategy<Value = [f64; 4]> {
        (0.3f64..3.0, -1.0f64..1.0, -1.0f64..1.0, 0.3f64..3.0)
            .prop_filter("orientation preserving", |(a, b, c, d)| a * d - b * c > 0.05)
            .prop_map(|(a, b, c, d)| [a, b, c, d])
    }

    proptest! {
        #[test]
        fn matches_jacobian_oracle(m in matrix(), tx in -5.0f64..5.0, ty in -5.0f64..5.0) {
            let (f, uv) = grid(2);
            let b = beltrami_from_map(&f, &uv, &apply(&uv, m, [tx, ty])).unwrap();
            let want = jacobian_mu(m);
            for mu in &b.mu {
                prop_assert!((mu - want).norm() < 1e-12);
            }
        }

        #[test]
        fn similarity_invariance(m in matrix(), th in 0.0f64..6.28, s in 0.2f64..5.0) {
            let (f, uv) = grid(3);
            let img = apply(&uv, m, [0.0, 0.0]);
            let (cs, sn) = (s * th.cos(), s * th.sin());
            let img2 = apply(&img, [cs, -sn, sn, cs], [1.0, -2.0]);
            let a = beltrami_from_map(&f, &uv, &img).unwrap();
            let b = beltrami_from_map(&f, &uv, &img2).unwrap();
            for (x, y) in a.mu.iter().zip(&b.mu) {
                prop_assert!((x - y).norm() < 1e-12);
            }
        }

        #[test]
        fn composition_matches_direct(mf in matrix(), mg in matrix()) {
            let (f, uv) = grid(2);
            let img_f = apply(&uv, mf, [0.3, -0.1]);
            let img_gf = apply(&img_f, mg, [-0.4, 0.2]);
            let d = map_derivatives(&f, &uv, &img_f).unwrap();
            let mu_f = BeltramiField::from_mu(d.iter().map(|(a, b)| b / a).collect());
            let fz: Vec<_> = d.iter().map(|p| p.0).collect();
            let mu_g = beltrami_from_map(&f, &img_f, &img_gf).unwrap();
            let comp = compose_beltrami(&mu_f, &fz, &mu_g).unwrap();
            let direct = beltrami_from_map(&f, &uv, &img_gf).unwrap();
            for (x, y) in comp.mu.iter().zip(&direct.mu) {
                prop_assert!((x - y).norm() < 1e-10);
            }
        }
    }
}
