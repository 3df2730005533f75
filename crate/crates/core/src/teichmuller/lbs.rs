use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sparse::{DirichletSolver, TripletBuilder};

/// Per-vertex constraint on one coordinate of the solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pin {
    Free,
    Fixed(f64),
}

/// Constraints for a map into the rectangle [0, width] × [0, height].
#[derive(Debug, Clone, PartialEq)]
pub struct MapConstraints {
    pub u: Vec<Pin>,
    pub v: Vec<Pin>,
}

impl MapConstraints {
    pub fn free(n: usize) -> Self {
        Self {
            u: vec![Pin::Free; n],
            v: vec![Pin::Free; n],
        }
    }

    pub fn pin(&mut self, vertex: usize, p: Vector2<f64>) {
        self.u[vertex] = Pin::Fixed(p.x);
        self.v[vertex] = Pin::Fixed(p.y);
    }

    /// Pinned (vertex, target) pairs, i.e. vertices with both coordinates fixed.
    pub fn pinned(&self) -> Vec<(usize, Vector2<f64>)> {
        self.u
            .iter()
            .zip(&self.v)
            .enumerate()
            .filter_map(|(i, p)| match p {
                (Pin::Fixed(x), Pin::Fixed(y)) => Some((i, Vector2::new(*x, *y))),
                _ => None,
            })
            .collect()
    }
}

/// Diffusion tensor whose harmonic maps have Beltrami coefficient μ.
pub fn beltrami_tensor(mu: Complex64) -> Result<Matrix2<f64>> {
    let m2 = mu.norm_sqr();
    if !(m2 < 1.0) {
        return Err(Error::BeltramiOutOfRange {
            face: usize::MAX,
            modulus: m2.sqrt(),
        });
    }
    let (r, t) = (mu.re, mu.im);
    let s = 1.0 - m2;
    let a1 = ((r - 1.0).powi(2) + t * t) / s;
    let a2 = -2.0 * t / s;
    let a3 = ((1.0 + r).powi(2) + t * t) / s;
    Ok(Matrix2::new(a1, a2, a2, a3))
}

/// Linear Beltrami solver on a fixed planar source triangulation.
#[derive(Debug, Clone)]
pub struct LbsSolver {
    faces: Vec<[usize; 3]>,
    n: usize,
    /// Per face: area and basis-function gradients.
    geom: Vec<(f64, [Vector2<f64>; 3])>,
}

impl LbsSolver {
    pub fn new(faces: &[[usize; 3]], source: &[Vector2<f64>]) -> Result<Self> {
        let geom = faces
            .iter()
            .enumerate()
            .map(|(fi, f)| {
                let p = [source[f[0]], source[f[1]], source[f[2]]];
                let area = 0.5 * (p[1] - p[0]).perp(&(p[2] - p[0]));
                if !(area > 0.0) {
                    return Err(Error::InvalidFace {
                        face: fi,
                        reason: "source face has non-positive area".into(),
                    });
                }
                let grad = std::array::from_fn(|k| {
                    let e = p[(k + 2) % 3] - p[(k + 1) % 3];
                    Vector2::new(-e.y, e.x) / (2.0 * area)
                });
                Ok((area, grad))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            faces: faces.to_vec(),
            n: source.len(),
            geom,
        })
    }

    pub fn face_areas(&self) -> Vec<f64> {
        self.geom.iter().map(|g| g.0).collect()
    }

    /// Solves ∇·(A(μ)∇u) = 0 and ∇·(A(μ)∇v) = 0 under the constraints.
    pub fn solve(&self, mu: &[Complex64], c: &MapConstraints) -> Result<Vec<Vector2<f64>>> {
        if mu.len() != self.faces.len() || c.u.len() != self.n || c.v.len() != self.n {
            return Err(Error::Dimension("LBS input sizes differ from the mesh".into()));
        }
        let mut b = TripletBuilder::with_capacity(self.n, self.faces.len() * 9);
        for (fi, (f, (area, g))) in self.faces.iter().zip(&self.geom).enumerate() {
            let a = beltrami_tensor(mu[fi]).map_err(|_| Error::BeltramiOutOfRange {
                face: fi,
                modulus: mu[fi].norm(),
            })?;
            for k in 0..3 {
                let ag = a * g[k];
                for l in 0..3 {
                    b.add(f[k], f[l], area * ag.dot(&g[l]));
                }
            }
        }
        let m = b.build();
        let coord = |pins: &[Pin]| -> Result<Vec<f64>> {
            let fixed: Vec<bool> = pins.iter().map(|p| matches!(p, Pin::Fixed(_))).collect();
            let vals: Vec<f64> = pins
                .iter()
                .map(|p| match p {
                    Pin::Fixed(x) => *x,
                    Pin::Free => 0.0,
                })
                .collect();
            if fixed.iter().all(|&f| f) {
                return Ok(vals);
            }
            Ok(DirichletSolver::new(&m, &fixed)?.solve(&vals, None))
        };
        let u = coord(&c.u)?;
        let v = coord(&c.v)?;
        Ok(u.into_iter().zip(v).map(|(x, y)| Vector2::new(x, y)).collect())
    }
}
