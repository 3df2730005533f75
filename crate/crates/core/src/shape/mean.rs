use nalgebra::{Matrix3, Rotation3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{Dataset, LandmarkSet, TriMesh};
use crate::param::{rectangular_param, RectParam};
use crate::teichmuller::{landmark_tmap_with, QcOptions, SurfaceMap};

/// Largest tolerated fraction of subjects dropped for non-converged maps.
pub const MAX_EXCLUDED_FRACTION: f64 = 0.1;

/// Best rigid motion (rotation, translation) taking `p` onto `q` in the
/// least-squares sense.
pub fn kabsch(p: &[Vector3<f64>], q: &[Vector3<f64>]) -> (Rotation3<f64>, Vector3<f64>) {
    assert_eq!(p.len(), q.len());
    let n = p.len() as f64;
    let pc = p.iter().sum::<Vector3<f64>>() / n;
    let qc = q.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (a, b) in p.iter().zip(q) {
        h += (a - pc) * (b - qc).transpose();
    }
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    let d = (vt.transpose() * u.transpose()).determinant().signum();
    let r = vt.transpose() * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    let rot = Rotation3::from_matrix_unchecked(r);
    (rot, qc - rot * pc)
}

/// Symmetric matrix of Teichmüller distances, from maps i → j for i < j.
/// Pairs whose map fails get an infinite distance.
pub fn pairwise_distances(ds: &Dataset, params: &[RectParam], qc: &QcOptions) -> Vec<Vec<f64>> {
    let n = ds.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let d: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (&ds.subjects[i], &ds.subjects[j]);
            match landmark_tmap_with(&a.mesh, &a.landmarks, &params[i], &b.mesh, &b.landmarks, &params[j], qc) {
                Ok(m) => m.distance,
                Err(e) => {
                    log::warn!("map {} -> {} failed: {e}", a.name, b.name);
                    f64::INFINITY
                }
            }
        })
        .collect();
    let mut out = vec![vec![0.0; n]; n];
    for (&(i, j), &v) in pairs.iter().zip(&d) {
        out[i][j] = v;
        out[j][i] = v;
    }
    out
}

/// Index minimising the row sum; ties go to the lower index.
pub fn medoid(dist: &[Vec<f64>]) -> usize {
    let sums: Vec<f64> = dist.iter().map(|r| r.iter().sum()).collect();
    let mut best = 0;
    for (i, &s) in sums.iter().enumerate() {
        if s < sums[best] {
            best = i;
        }
    }
    best
}

/// Maps `template` onto every subject. Returns per subject the map, or
/// `None` when it failed or did not converge.
pub fn maps_from(
    template: &TriMesh,
    landmarks: &LandmarkSet,
    ds: &Dataset,
    params: &[RectParam],
    qc: &QcOptions,
) -> Result<Vec<Option<SurfaceMap>>> {
    let pt = rectangular_param(template, landmarks)?;
    let maps: Vec<Option<SurfaceMap>> = ds
        .subjects
        .par_iter()
        .zip(params)
        .map(|(s, ps)| match landmark_tmap_with(template, landmarks, &pt, &s.mesh, &s.landmarks, ps, qc) {
            Ok(m) if m.converged => Some(m),
            Ok(m) => {
                log::warn!("excluding {}: map stopped at uniformity {:.4}", s.name, m.residual_uniformity);
                None
            }
            Err(e) => {
                log::warn!("excluding {}: {e}", s.name);
                None
            }
        })
        .collect();
    let excluded = maps.iter().filter(|m| m.is_none()).count();
    if excluded as f64 > MAX_EXCLUDED_FRACTION * ds.len() as f64 {
        return Err(Error::TooManyExcluded {
            excluded,
            total: ds.len(),
        });
    }
    Ok(maps)
}

/// Rigidly aligns each mapped point set to the template and averages.
fn average(template: &TriMesh, ds: &Dataset, maps: &[Option<SurfaceMap>]) -> Result<TriMesh> {
    let reference = template.vertices();
    let mut acc = vec![Vector3::zeros(); reference.len()];
    let mut count = 0usize;
    for (s, m) in ds.subjects.iter().zip(maps) {
        let Some(m) = m else { continue };
        let pos = m.mapped_positions(&s.mesh);
        let (r, t) = kabsch(&pos, reference);
        for (a, p) in acc.iter_mut().zip(&pos) {
            *a += r * p + t;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::TooManyExcluded {
            excluded: ds.len(),
            total: ds.len(),
        });
    }
    template.with_positions(acc.into_iter().map(|a| a / count as f64).collect())
}

#[derive(Debug, Clone)]
pub struct MeanSurface {
    pub mesh: TriMesh,
    pub landmarks: LandmarkSet,
    /// Dataset index of the medoid template.
    pub template: usize,
    /// Symmetric pairwise Teichmüller distances.
    pub distances: Vec<Vec<f64>>,
}

/// Medoid template followed by two rounds of aligned averaging, the second
/// using the first average as template.
pub fn mean_surface(ds: &Dataset, params: &[RectParam], qc: &QcOptions) -> Result<MeanSurface> {
    if ds.len() < 2 {
        return Err(Error::InvalidParameter("mean surface needs at least two subjects".into()));
    }
    if params.len() != ds.len() {
        return Err(Error::Dimension("one rectangle parameterisation per subject required".into()));
    }
    ds.check_landmarks()?;
    let distances = pairwise_distances(ds, params, qc);
    let template = medoid(&distances);
    log::info!("template subject: {}", ds.subjects[template].name);
    let t = &ds.subjects[template];
    let landmarks = t.landmarks.clone();
    let mut mesh = t.mesh.clone();
    for _ in 0..2 {
        let maps = maps_from(&mesh, &landmarks, ds, params, qc)?;
        mesh = average(&mesh, ds, &maps)?;
    }
    Ok(MeanSurface {
        mesh,
        landmarks,
        template,
        distances,
    })
}

/// [`mean_surface`] computing the rectangle parameterisations itself.
pub fn mean_surface_of(ds: &Dataset, qc: &QcOptions) -> Result<MeanSurface> {
    let params = rect_params(ds)?;
    mean_surface(ds, &params, qc)
}

pub fn rect_params(ds: &Dataset) -> Result<Vec<RectParam>> {
    ds.subjects
        .par_iter()
        .map(|s| rectangular_param(&s.mesh, &s.landmarks))
        .collect()
}
