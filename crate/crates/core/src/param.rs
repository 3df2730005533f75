//! Conformal flattening of disk-type surfaces onto the unit disk and onto
//! rectangles with four marked corners.
//!
//! The disk map is computed in three linear solves: a free-boundary least
//! squares conformal map, a discrete Riemann map of that planar domain which
//! fixes the boundary angles, and a cotangent-harmonic extension of those
//! boundary values. The rectangle map then solves two mixed Dirichlet and
//! Neumann problems on the disk and scales one of them by the conformal
//! module of the quadrilateral.

use std::f64::consts::PI;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::diffgeo::{
    beltrami_from_surface, count_flips, cotan_stiffness, weighted_mean_std, BeltramiField,
};
use crate::error::{Error, Result};
use crate::mesh::{LandmarkSet, TriMesh};
use crate::sparse::{CsrMatrix, DirichletSolver, TripletBuilder};

/// Accepted range of rectangle heights.
pub const HEIGHT_RANGE: (f64, f64) = (1e-3, 1e3);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Disk,
    Rectangle,
}

/// Per-vertex planar coordinates of a mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarEmbedding {
    pub uv: Vec<Vector2<f64>>,
    pub domain: Domain,
    /// Rectangle corners mapped to (0,0), (1,0), (1,h), (0,h).
    pub corners: Option<[usize; 4]>,
    pub height: Option<f64>,
}

impl PlanarEmbedding {
    /// Uses the x and y coordinates of an already planar mesh.
    pub fn from_planar_mesh(mesh: &TriMesh, domain: Domain) -> Self {
        Self {
            uv: mesh.vertices().iter().map(|p| Vector2::new(p.x, p.y)).collect(),
            domain,
            corners: None,
            height: None,
        }
    }

    pub fn width(&self) -> f64 {
        match self.domain {
            Domain::Rectangle => 1.0,
            Domain::Disk => 2.0,
        }
    }
}

/// Conformality and bijectivity report of an embedding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quality {
    pub mean_mu: f64,
    pub max_mu: f64,
    pub flips: usize,
}

impl Quality {
    pub fn of(mesh: &TriMesh, uv: &[Vector2<f64>]) -> Result<Self> {
        let mu = beltrami_from_surface(mesh, uv)?;
        let areas: Vec<f64> = (0..mesh.num_faces()).map(|f| mesh.face_area(f)).collect();
        Ok(Self {
            mean_mu: weighted_mean_std(&mu.moduli(), Some(&areas)).0,
            max_mu: mu.max_modulus(),
            flips: count_flips(mesh.faces(), uv),
        })
    }
}

/// Minimises Dirichlet energy minus signed image area with two boundary
/// vertices pinned.
fn lscm(mesh: &TriMesh, k: &CsrMatrix) -> Result<Vec<Vector2<f64>>> {
    let n = mesh.num_vertices();
    let mut b = TripletBuilder::with_capacity(2 * n, 2 * k.nnz() + 4 * mesh.boundary().len());
    for i in 0..n {
        for (j, v) in k.row(i) {
            b.add(i, j, v);
            b.add(n + i, n + j, v);
        }
    }
    let bd = mesh.boundary();
    for t in 0..bd.len() {
        let (a, c) = (bd[t], bd[(t + 1) % bd.len()]);
        b.add(a, n + c, -0.5);
        b.add(n + c, a, -0.5);
        b.add(c, n + a, 0.5);
        b.add(n + a, c, 0.5);
    }
    let m = b.build();
    let p0 = bd[0];
    let p1 = *bd
        .iter()
        .max_by(|&&x, &&y| {
            let dx = (mesh.vertex(x) - mesh.vertex(p0)).norm();
            let dy = (mesh.vertex(y) - mesh.vertex(p0)).norm();
            dx.total_cmp(&dy).then(y.cmp(&x))
        })
        .expect("non-empty boundary");
    let dist = (mesh.vertex(p1) - mesh.vertex(p0)).norm();
    let mut fixed = vec![false; 2 * n];
    let mut vals = vec![0.0; 2 * n];
    for p in [p0, p1] {
        fixed[p] = true;
        fixed[n + p] = true;
    }
    vals[p1] = dist;
    let x = DirichletSolver::new(&m, &fixed)?.solve(&vals, None);
    Ok((0..n).map(|i| Vector2::new(x[i], x[n + i])).collect())
}

fn locate_brute(faces: &[[usize; 3]], uv: &[Vector2<f64>], p: &Vector2<f64>) -> bool {
    faces.iter().any(|f| {
        let (a, b, c) = (uv[f[0]], uv[f[1]], uv[f[2]]);
        let cross = |o: Vector2<f64>, x: Vector2<f64>| (x - o).perp(&(p - o));
        cross(a, b) >= 0.0 && cross(b, c) >= 0.0 && cross(c, a) >= 0.0
    })
}

/// Total backward boundary-angle motion (radians) tolerated before the
/// Riemann-map boundary is abandoned for arc length.
pub const MAX_ANGLE_REVERSAL: f64 = 0.1;

/// Boundary angles of the discrete Riemann map of the planar domain `w`.
/// Returns `None` when the angles run backwards by more than
/// [`MAX_ANGLE_REVERSAL`] in total.
fn riemann_boundary_angles(mesh: &TriMesh, k: &CsrMatrix, w: &[Vector2<f64>]) -> Result<Option<Vec<f64>>> {
    let n = mesh.num_vertices();
    let bd = mesh.boundary();
    let nb = bd.len();

    let mut area = 0.0;
    let mut centroid = Vector2::zeros();
    for f in mesh.faces() {
        let (a, b, c) = (w[f[0]], w[f[1]], w[f[2]]);
        let s = 0.5 * (b - a).perp(&(c - a));
        area += s;
        centroid += s * (a + b + c) / 3.0;
    }
    let mut z0 = centroid / area;
    if !locate_brute(mesh.faces(), w, &z0) {
        let inner = (0..n).filter(|&i| !mesh.is_boundary(i)).min_by(|&i, &j| {
            (w[i] - z0).norm().total_cmp(&(w[j] - z0).norm()).then(i.cmp(&j))
        });
        match inner {
            Some(i) => z0 = w[i],
            None => return Ok(None),
        }
    }

    let mut fixed = vec![false; n];
    let mut vals = vec![0.0; n];
    for &b in bd {
        fixed[b] = true;
        vals[b] = -(w[b] - z0).norm().ln();
    }
    let g = if fixed.iter().all(|&f| f) {
        vals
    } else {
        DirichletSolver::new(k, &fixed)?.solve(&vals, None)
    };
    let flux: Vec<f64> = bd.iter().map(|&b| k.row(b).map(|(j, v)| v * g[j]).sum()).collect();
    let len: Vec<f64> = (0..nb)
        .map(|t| (mesh.vertex(bd[(t + 1) % nb]) - mesh.vertex(bd[t])).norm())
        .collect();

    let mut theta = Vec::with_capacity(nb);
    let mut conj = 0.0;
    let mut prev_arg = f64::NAN;
    let mut unwrap = 0.0;
    for t in 0..nb {
        if t > 0 {
            let e = len[t - 1];
            let before = len[(t + nb - 2) % nb];
            conj += flux[t - 1] * e / (before + e) + flux[t] * e / (e + len[t]);
        }
        let d = w[bd[t]] - z0;
        let mut arg = d.y.atan2(d.x);
        if t > 0 {
            while arg + unwrap < prev_arg - PI {
                unwrap += 2.0 * PI;
            }
            while arg + unwrap > prev_arg + PI {
                unwrap -= 2.0 * PI;
            }
        }
        arg += unwrap;
        prev_arg = arg;
        theta.push(arg + conj);
    }
    // Near convex corners the map's derivative vanishes and a few steps can
    // come out slightly negative. Small reversals are floored and the
    // remaining steps rescaled to a full turn; large ones reject the map.
    let closes = theta[0] + 2.0 * PI;
    let mut steps: Vec<f64> = (0..nb)
        .map(|t| if t + 1 < nb { theta[t + 1] - theta[t] } else { closes - theta[t] })
        .collect();
    let backward: f64 = steps.iter().filter(|&&d| d < 0.0).map(|d| -d).sum();
    if backward > MAX_ANGLE_REVERSAL {
        return Ok(None);
    }
    let floor = 1e-3 * 2.0 * PI / nb as f64;
    steps.iter_mut().for_each(|d| *d = d.max(floor));
    let scale = 2.0 * PI / steps.iter().sum::<f64>();
    let mut acc = theta[0];
    for (t, d) in steps[..nb - 1].iter().enumerate() {
        theta[t] = acc;
        acc += d * scale;
    }
    theta[nb - 1] = acc;
    Ok(Some(theta))
}

fn arc_length_angles(mesh: &TriMesh) -> Vec<f64> {
    let bd = mesh.boundary();
    let total = mesh.boundary_perimeter();
    let mut s = 0.0;
    let mut out = Vec::with_capacity(bd.len());
    for t in 0..bd.len() {
        out.push(2.0 * PI * s / total);
        s += (mesh.vertex(bd[(t + 1) % bd.len()]) - mesh.vertex(bd[t])).norm();
    }
    out
}

/// Result of [`disk_conformal`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiskParam {
    pub embedding: PlanarEmbedding,
    pub quality: Quality,
    /// False when the Riemann-map boundary was unusable and arc length was used.
    pub conformal_boundary: bool,
}

/// Conformal map of a disk-type surface onto the unit disk.
pub fn disk_conformal(mesh: &TriMesh) -> Result<DiskParam> {
    let n = mesh.num_vertices();
    let k = cotan_stiffness(mesh.faces(), mesh.vertices());
    let w = lscm(mesh, &k)?;
    let (theta, conformal_boundary) = match riemann_boundary_angles(mesh, &k, &w)? {
        Some(t) => (t, true),
        None => (arc_length_angles(mesh), false),
    };

    let mut fixed = vec![false; n];
    let mut xs = vec![0.0; n];
    let mut ys = vec![0.0; n];
    for (&b, t) in mesh.boundary().iter().zip(&theta) {
        fixed[b] = true;
        xs[b] = t.cos();
        ys[b] = t.sin();
    }
    let (u, v) = if fixed.iter().all(|&f| f) {
        (xs, ys)
    } else {
        let s = DirichletSolver::new(&k, &fixed)?;
        (s.solve(&xs, None), s.solve(&ys, None))
    };
    let uv: Vec<Vector2<f64>> = u.iter().zip(&v).map(|(&x, &y)| Vector2::new(x, y)).collect();
    let quality = Quality::of(mesh, &uv)?;
    if quality.flips > 0 {
        return Err(Error::FlippedFaces { count: quality.flips });
    }
    Ok(DiskParam {
        embedding: PlanarEmbedding {
            uv,
            domain: Domain::Disk,
            corners: None,
            height: None,
        },
        quality,
        conformal_boundary,
    })
}

/// Source landmark of each rectangle corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CornerRole {
    Cusp1,
    Cusp2,
    Pit1,
    Pit2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corners {
    /// Boundary vertices in CCW order starting at the first cusp.
    pub vertices: [usize; 4],
    pub roles: [CornerRole; 4],
}

/// Picks the two cusp landmarks and the boundary vertices nearest the two
/// pit landmarks, in boundary order from the first cusp.
pub fn select_corners(mesh: &TriMesh, lm: &LandmarkSet) -> Result<Corners> {
    if lm.len() < 4 {
        return Err(Error::LandmarkCountMismatch { left: 4, right: lm.len() });
    }
    let idx = lm.indices();
    for (landmark, &v) in idx[..2].iter().enumerate() {
        if !mesh.is_boundary(v) {
            return Err(Error::LandmarkNotOnBoundary { landmark, vertex: v });
        }
    }
    let proxy = |v: usize| {
        let p = mesh.vertex(v);
        crate::mesh::nearest_in(mesh.boundary().iter().map(|&b| (b, mesh.vertex(b))), &p).0
    };
    let cand = [
        (idx[0], CornerRole::Cusp1),
        (proxy(idx[2]), CornerRole::Pit1),
        (idx[1], CornerRole::Cusp2),
        (proxy(idx[3]), CornerRole::Pit2),
    ];
    for a in 0..4 {
        for b in a + 1..4 {
            if cand[a].0 == cand[b].0 {
                return Err(Error::CoincidentCorners { vertex: cand[a].0 });
            }
        }
    }
    let nb = mesh.boundary().len();
    let start = mesh.boundary_position(idx[0]).expect("cusp is on the boundary");
    let mut ordered: Vec<(usize, (usize, CornerRole))> = cand
        .iter()
        .map(|&c| ((mesh.boundary_position(c.0).expect("corner on boundary") + nb - start) % nb, c))
        .collect();
    ordered.sort_by_key(|o| o.0);
    Ok(Corners {
        vertices: std::array::from_fn(|i| ordered[i].1 .0),
        roles: std::array::from_fn(|i| ordered[i].1 .1),
    })
}

/// Boundary vertices from `a` to `b` inclusive, walking the loop forward.
fn boundary_arc(mesh: &TriMesh, a: usize, b: usize) -> Vec<usize> {
    let bd = mesh.boundary();
    let nb = bd.len();
    let mut t = mesh.boundary_position(a).expect("corner on boundary");
    let mut out = vec![bd[t]];
    while bd[t] != b {
        t = (t + 1) % nb;
        out.push(bd[t]);
    }
    out
}

/// Conformal map onto [0,1]×[0,h] with the given corners (CCW) sent to
/// (0,0), (1,0), (1,h), (0,h). `disk` must be an embedding of `mesh`.
pub fn disk_to_rectangle(mesh: &TriMesh, disk: &PlanarEmbedding, corners: [usize; 4]) -> Result<PlanarEmbedding> {
    let n = mesh.num_vertices();
    let nb = mesh.boundary().len();
    let mut pos = [0usize; 4];
    for (t, &c) in corners.iter().enumerate() {
        pos[t] = mesh
            .boundary_position(c)
            .ok_or(Error::LandmarkNotOnBoundary { landmark: t, vertex: c })?;
    }
    let rel: Vec<usize> = pos.iter().map(|&p| (p + nb - pos[0]) % nb).collect();
    if !(rel[0] < rel[1] && rel[1] < rel[2] && rel[2] < rel[3]) {
        return Err(Error::InvalidParameter("corners are not in boundary order".into()));
    }
    if disk.uv.len() != n {
        return Err(Error::Dimension(format!("mesh has {n} vertices, disk embedding {}", disk.uv.len())));
    }
    let [c1, c2, c3, c4] = corners;
    // Harmonic measure is conformally invariant, so the surface's own cotan
    // weights give the same continuum map without the disk map's error.
    let k = cotan_stiffness(mesh.faces(), mesh.vertices());

    let solve = |zero: &[usize], one: &[usize]| -> Result<(Vec<f64>, f64)> {
        let mut fixed = vec![false; n];
        let mut vals = vec![0.0; n];
        for &z in zero {
            fixed[z] = true;
        }
        for &o in one {
            fixed[o] = true;
            vals[o] = 1.0;
        }
        let x = DirichletSolver::new(&k, &fixed)?.solve(&vals, None);
        let e = k.quad_form(&x);
        Ok((x, e))
    };
    let (u, eu) = solve(&boundary_arc(mesh, c4, c1), &boundary_arc(mesh, c2, c3))?;
    let (v, ev) = solve(&boundary_arc(mesh, c1, c2), &boundary_arc(mesh, c3, c4))?;
    let h = (eu / ev).sqrt();
    if !(HEIGHT_RANGE.0..=HEIGHT_RANGE.1).contains(&h) {
        return Err(Error::BadAspect { height: h });
    }
    let uv: Vec<Vector2<f64>> = u.iter().zip(&v).map(|(&x, &y)| Vector2::new(x, h * y)).collect();
    let flips = count_flips(mesh.faces(), &uv);
    if flips > 0 {
        return Err(Error::FlippedFaces { count: flips });
    }
    Ok(PlanarEmbedding {
        uv,
        domain: Domain::Rectangle,
        corners: Some(corners),
        height: Some(h),
    })
}

/// Surface-to-rectangle conformal parameterisation with landmark images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RectParam {
    pub rect: PlanarEmbedding,
    pub corners: Corners,
    pub landmark_uv: Vec<Vector2<f64>>,
    pub disk_quality: Quality,
    pub quality: Quality,
}

impl RectParam {
    pub fn height(&self) -> f64 {
        self.rect.height.unwrap_or(1.0)
    }

    /// Beltrami coefficient of the parameterisation in local face frames.
    pub fn beltrami(&self, mesh: &TriMesh) -> Result<BeltramiField> {
        beltrami_from_surface(mesh, &self.rect.uv)
    }
}

pub fn rectangular_param(mesh: &TriMesh, lm: &LandmarkSet) -> Result<RectParam> {
    let corners = select_corners(mesh, lm)?;
    let disk = disk_conformal(mesh)?;
    let rect = disk_to_rectangle(mesh, &disk.embedding, corners.vertices)?;
    let quality = Quality::of(mesh, &rect.uv)?;
    let landmark_uv = lm.indices().iter().map(|&i| rect.uv[i]).collect();
    Ok(RectParam {
        rect,
        corners,
        landmark_uv,
        disk_quality: disk.quality,
        quality,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::primitives::{planar_disk, rect_grid, rect_grid_corners, unit_square};
    use nalgebra::Vector3;

    #[test]
    fn flat_disk_is_already_conformal() {
        let m = planar_disk(8);
        let d = disk_conformal(&m).unwrap();
        assert!(d.conformal_boundary);
        assert!(d.quality.mean_mu < 1e-6, "{}", d.quality.mean_mu);
        for &b in m.boundary() {
            assert!((d.embedding.uv[b].norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn stretched_disk_maps_conformally() {
        let mu = |rings: usize| {
            let m = planar_disk(rings).map_positions(|p| Vector3::new(1.5 * p.x, p.y, 0.0)).unwrap();
            let d = disk_conformal(&m).unwrap();
            assert_eq!(d.quality.flips, 0);
            d.quality.mean_mu
        };
        let (coarse, fine) = (mu(10), mu(20));
        assert!(fine < 0.02, "{fine}");
        // first-order convergence under refinement
        assert!(fine < 0.6 * coarse, "{coarse} -> {fine}");
    }

    #[test]
    fn unit_square_is_identity() {
        let m = unit_square(6);
        let e = PlanarEmbedding::from_planar_mesh(&m, Domain::Disk);
        let r = disk_to_rectangle(&m, &e, rect_grid_corners(6, 6)).unwrap();
        assert!((r.height.unwrap() - 1.0).abs() < 1e-9);
        for (a, b) in r.uv.iter().zip(&e.uv) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn two_by_one_rectangle_height() {
        let m = rect_grid(20, 10, 2.0, 1.0);
        let e = PlanarEmbedding::from_planar_mesh(&m, Domain::Disk);
        let r = disk_to_rectangle(&m, &e, rect_grid_corners(20, 10)).unwrap();
        assert!((r.height.unwrap() - 0.5).abs() < 0.005);
    }

    #[test]
    fn cornered_domain_keeps_conformal_boundary() {
        let m = rect_grid(40, 20, 2.0, 1.0);
        let d = disk_conformal(&m).unwrap();
        assert!(d.conformal_boundary);
        assert!(d.quality.mean_mu < 0.06, "{}", d.quality.mean_mu);
        let r = disk_to_rectangle(&m, &d.embedding, rect_grid_corners(40, 20)).unwrap();
        assert!((r.height.unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn symmetric_disk_corners_give_square() {
        let m = planar_disk(12);
        let e = PlanarEmbedding::from_planar_mesh(&m, Domain::Disk);
        let bd = m.boundary();
        let nb = bd.len();
        let start = bd.iter().position(|&b| {
            let p = m.vertex(b);
            p.y.atan2(p.x).abs() < PI / nb as f64
        });
        let s = start.unwrap();
        let corners = std::array::from_fn(|q| bd[(s + q * nb / 4) % nb]);
        let r = disk_to_rectangle(&m, &e, corners).unwrap();
        assert!((r.height.unwrap() - 1.0).abs() < 0.01);
    }

    #[test]
    fn corners_out_of_order_rejected() {
        let m = unit_square(3);
        let e = PlanarEmbedding::from_planar_mesh(&m, Domain::Disk);
        let [a, b, c, d] = rect_grid_corners(3, 3);
        assert!(disk_to_rectangle(&m, &e, [a, c, b, d]).is_err());
    }

    #[test]
    fn corner_selection() {
        let m = unit_square(4);
        // vertex ids: (i, j) -> j*5 + i
        let lm = LandmarkSet::new(vec![2, 22, 6, 13], m.num_vertices()).unwrap();
        let c = select_corners(&m, &lm).unwrap();
        // pit (1,1) is equidistant from boundary vertices 1 and 5: smaller index wins
        assert_eq!(c.vertices, [2, 14, 22, 1]);
        assert_eq!(c.roles, [CornerRole::Cusp1, CornerRole::Pit2, CornerRole::Cusp2, CornerRole::Pit1]);

        let interior = LandmarkSet::new(vec![6, 22, 7, 13], m.num_vertices()).unwrap();
        assert!(matches!(select_corners(&m, &interior), Err(Error::LandmarkNotOnBoundary { landmark: 0, .. })));
    }

    #[test]
    fn deterministic() {
        let m = planar_disk(6).map_positions(|p| Vector3::new(p.x, p.y, 0.3 * p.x * p.y)).unwrap();
        let a = disk_conformal(&m).unwrap();
        let b = disk_conformal(&m).unwrap();
        assert_eq!(a, b);
    }
}
