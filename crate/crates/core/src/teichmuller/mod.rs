//! Landmark-matching Teichmüller maps between disk-type surfaces.
//!
//! Both surfaces are flattened to rectangles; a quasi-conformal iteration
//! then drives the rectangle-to-rectangle map towards constant |μ| while
//! keeping corners, sides and landmarks in place. The surface map is the
//! pullback of that planar map through the target parameterisation.

mod lbs;
mod locate;

use nalgebra::Vector2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diffgeo::{beltrami_from_map, weighted_mean_std, BeltramiField, SurfacePoint};
use crate::error::{Error, Result};
use crate::mesh::{validate_pair, LandmarkSet, TriMesh};
use crate::param::{rectangular_param, PlanarEmbedding, RectParam};

pub use lbs::{beltrami_tensor, LbsSolver, MapConstraints, Pin};
pub use locate::{PointLocator, LOCATE_TOL};

/// Largest |μ| allowed back into the solver after smoothing.
const MU_CLAMP: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QcOptions {
    /// Convergence requires std(|μ|)/mean(|μ|) below this.
    pub uniformity_tol: f64,
    /// ... and a change of mean |μ| between iterations below this.
    pub mean_tol: f64,
    pub max_iter: usize,
    /// Initial weight of the neighbour average in the smoothing step.
    pub smoothing: f64,
    /// The weight is halved after this many iterations without a 1%
    /// improvement of the best uniformity, down to `min_smoothing`.
    pub stall_patience: usize,
    pub min_smoothing: f64,
    /// Consecutive folded iterates tolerated before giving up.
    pub fold_patience: usize,
    pub order: ProjectionOrder,
}

/// Order of the two Beltrami projection steps inside one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionOrder {
    ChopThenSmooth,
    SmoothThenChop,
}

impl Default for QcOptions {
    fn default() -> Self {
        Self {
            uniformity_tol: 0.05,
            mean_tol: 1e-4,
            max_iter: 200,
            smoothing: 0.5,
            stall_patience: 8,
            min_smoothing: 0.05,
            fold_patience: 10,
            order: ProjectionOrder::ChopThenSmooth,
        }
    }
}

/// Teichmüller distance ½·ln((1+k)/(1−k)).
pub fn teichmuller_distance(k: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&k) {
        return Err(Error::InvalidDilatation { k });
    }
    Ok(0.5 * ((1.0 + k) / (1.0 - k)).ln())
}

/// Side constraints of a map from `rect` onto [0,1]×[0,target_height]
/// with `landmarks` (source vertex, target uv) pinned.
pub fn rect_constraints(
    mesh: &TriMesh,
    rect: &PlanarEmbedding,
    target_height: f64,
    landmarks: &[(usize, Vector2<f64>)],
) -> Result<MapConstraints> {
    let [c1, c2, c3, c4] = rect
        .corners
        .ok_or_else(|| Error::InvalidParameter("embedding has no rectangle corners".into()))?;
    let bd = mesh.boundary();
    let nb = bd.len();
    let mut c = MapConstraints::free(mesh.num_vertices());
    let mut walk = |a: usize, b: usize, set: &mut dyn FnMut(&mut MapConstraints, usize)| {
        let mut t = mesh.boundary_position(a).expect("corner on boundary");
        loop {
            set(&mut c, bd[t]);
            if bd[t] == b {
                break;
            }
            t = (t + 1) % nb;
        }
    };
    walk(c1, c2, &mut |c, v| c.v[v] = Pin::Fixed(0.0));
    walk(c2, c3, &mut |c, v| c.u[v] = Pin::Fixed(1.0));
    walk(c3, c4, &mut |c, v| c.v[v] = Pin::Fixed(target_height));
    walk(c4, c1, &mut |c, v| c.u[v] = Pin::Fixed(0.0));
    for &(v, p) in landmarks {
        c.pin(v, p);
    }
    Ok(c)
}

/// Outcome of the quasi-conformal iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct QcResult {
    pub uv: Vec<Vector2<f64>>,
    pub mu: BeltramiField,
    /// Area-weighted mean |μ|.
    pub k: f64,
    pub uniformity: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn stats(mu: &BeltramiField, areas: &[f64]) -> (f64, f64) {
    let (mean, std) = weighted_mean_std(&mu.moduli(), Some(areas));
    let uniformity = if mean < 1e-8 { 0.0 } else { std / mean };
    (mean, uniformity)
}

/// Sets every modulus to `mean`, keeping arguments.
fn chop(mu: &[Complex64], mean: f64) -> Vec<Complex64> {
    let target = mean.min(MU_CLAMP);
    mu.iter()
        .map(|m| {
            let r = m.norm();
            if r > 0.0 {
                m * (target / r)
            } else {
                Complex64::new(target, 0.0)
            }
        })
        .collect()
}

/// Blends each face value with the mean over its edge neighbours.
fn smooth(mu: &[Complex64], adjacency: &[Vec<usize>], weight: f64) -> Vec<Complex64> {
    mu.iter()
        .enumerate()
        .map(|(f, &m)| {
            let nb = &adjacency[f];
            let avg = if nb.is_empty() {
                m
            } else {
                nb.iter().map(|&g| mu[g]).sum::<Complex64>() / nb.len() as f64
            };
            let out = (1.0 - weight) * m + weight * avg;
            let r = out.norm();
            if r > MU_CLAMP {
                out * (MU_CLAMP / r)
            } else {
                out
            }
        })
        .collect()
}

/// Iterates LBS solves and Beltrami projection towards a Teichmüller map.
pub fn qc_iterate(
    mesh: &TriMesh,
    source: &[Vector2<f64>],
    constraints: &MapConstraints,
    opts: &QcOptions,
) -> Result<QcResult> {
    let faces = mesh.faces();
    let solver = LbsSolver::new(faces, source)?;
    let areas = solver.face_areas();
    let adjacency = mesh.face_neighbors();
    let mut mu = vec![Complex64::new(0.0, 0.0); faces.len()];
    let mut prev_mean = 0.0;
    let mut fold_streak = 0usize;
    let mut best: Option<QcResult> = None;
    let mut weight = opts.smoothing;
    let mut stall = 0usize;

    for it in 1..=opts.max_iter {
        let uv = solver.solve(&mu, constraints)?;
        let nu = beltrami_from_map(faces, source, &uv)?;
        let (mean, uniformity) = stats(&nu, &areas);
        let folded = !nu.folds.is_empty();
        log::trace!("qc iteration {it}: mean {mean:.6} uniformity {uniformity:.4} folds {}", nu.folds.len());

        if folded {
            fold_streak += 1;
            if fold_streak > opts.fold_patience {
                return Err(Error::PersistentFolds { iterations: fold_streak });
            }
        } else {
            fold_streak = 0;
            let converged = uniformity < opts.uniformity_tol && (mean - prev_mean).abs() < opts.mean_tol;
            let current = QcResult {
                uv,
                mu: nu.clone(),
                k: mean,
                uniformity,
                iterations: it,
                converged,
            };
            if converged {
                return Ok(current);
            }
            match &best {
                Some(b) if uniformity >= 0.99 * b.uniformity => stall += 1,
                _ => stall = 0,
            }
            if best.as_ref().is_none_or(|b| uniformity < b.uniformity) {
                best = Some(current);
            }
            if stall >= opts.stall_patience && weight > opts.min_smoothing {
                weight = (0.5 * weight).max(opts.min_smoothing);
                stall = 0;
            }
        }
        prev_mean = mean;

        mu = match opts.order {
            ProjectionOrder::ChopThenSmooth => smooth(&chop(&nu.mu, mean), &adjacency, weight),
            ProjectionOrder::SmoothThenChop => {
                let s = smooth(&nu.mu, &adjacency, weight);
                let m = weighted_mean_std(&s.iter().map(|x| x.norm()).collect::<Vec<_>>(), Some(&areas)).0;
                chop(&s, m)
            }
        };
    }
    let mut res = best.ok_or(Error::PersistentFolds { iterations: fold_streak })?;
    res.iterations = opts.max_iter;
    res.converged = false;
    Ok(res)
}

/// Landmark-matching map between two surfaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMap {
    /// Image of every source vertex on the target mesh.
    pub images: Vec<SurfacePoint>,
    /// Beltrami coefficient of the rectangle-to-rectangle map.
    pub mu: BeltramiField,
    pub k: f64,
    pub distance: f64,
    pub residual_uniformity: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Largest landmark mismatch in the target rectangle.
    pub landmark_error: f64,
    /// Planar images in the target rectangle.
    #[serde(skip)]
    pub planar: Vec<Vector2<f64>>,
}

impl SurfaceMap {
    /// Mapped source vertices as 3D positions on the target.
    pub fn mapped_positions(&self, target: &TriMesh) -> Vec<nalgebra::Vector3<f64>> {
        self.images.iter().map(|p| p.position(target)).collect()
    }
}

fn vertex_point(mesh: &TriMesh, v: usize) -> SurfacePoint {
    let (face, f) = mesh
        .faces()
        .iter()
        .enumerate()
        .find(|(_, f)| f.contains(&v))
        .expect("every vertex has a face");
    let mut bary = [0.0; 3];
    bary[f.iter().position(|&x| x == v).expect("vertex in face")] = 1.0;
    SurfacePoint { face, bary }
}

/// Computes the map from surface `i` to surface `j`.
pub fn landmark_tmap(
    mesh_i: &TriMesh,
    lm_i: &LandmarkSet,
    mesh_j: &TriMesh,
    lm_j: &LandmarkSet,
    opts: &QcOptions,
) -> Result<SurfaceMap> {
    validate_pair(mesh_i, lm_i, mesh_j, lm_j)?;
    let pi = rectangular_param(mesh_i, lm_i)?;
    let pj = rectangular_param(mesh_j, lm_j)?;
    landmark_tmap_with(mesh_i, lm_i, &pi, mesh_j, lm_j, &pj, opts)
}

/// As [`landmark_tmap`] with precomputed rectangle parameterisations.
pub fn landmark_tmap_with(
    mesh_i: &TriMesh,
    lm_i: &LandmarkSet,
    pi: &RectParam,
    mesh_j: &TriMesh,
    lm_j: &LandmarkSet,
    pj: &RectParam,
    opts: &QcOptions,
) -> Result<SurfaceMap> {
    if lm_i.len() != lm_j.len() {
        return Err(Error::LandmarkCountMismatch {
            left: lm_i.len(),
            right: lm_j.len(),
        });
    }
    if pi.corners.roles != pj.corners.roles {
        return Err(Error::CornerOrderMismatch);
    }
    let pins: Vec<(usize, Vector2<f64>)> = lm_i.indices().iter().copied().zip(pj.landmark_uv.iter().copied()).collect();
    let constraints = rect_constraints(mesh_i, &pi.rect, pj.height(), &pins)?;
    let qc = qc_iterate(mesh_i, &pi.rect.uv, &constraints, opts)?;

    let landmark_error = pins
        .iter()
        .map(|(v, p)| (qc.uv[*v] - p).norm())
        .fold(0.0, f64::max);
    let locator = PointLocator::new(mesh_j.faces(), &pj.rect.uv);
    let mut images = qc.uv.iter().map(|p| locator.locate(p)).collect::<Result<Vec<_>>>()?;
    for (&vi, &vj) in lm_i.indices().iter().zip(lm_j.indices()) {
        images[vi] = vertex_point(mesh_j, vj);
    }
    Ok(SurfaceMap {
        images,
        distance: teichmuller_distance(qc.k)?,
        k: qc.k,
        residual_uniformity: qc.uniformity,
        converged: qc.converged,
        iterations: qc.iterations,
        mu: qc.mu,
        landmark_error,
        planar: qc.uv,
    })
}
