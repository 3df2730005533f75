//! Deterministic synthetic occlusal-like surfaces.
//!
//! Each surface is an elliptical disk whose height is a sum of two Gaussian
//! cusps near the boundary minus two Gaussian pits. Landmarks are, in order,
//! the two cusp apices snapped to the boundary and the two pit bottoms.
//!
//! Randomness comes from `ChaCha8Rng::seed_from_u64(seed)` with stream
//! `class << 32 | subject`, so every subject is reproducible on its own.

pub mod primitives;

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{write_landmarks, write_manifest, write_obj, Dataset, LandmarkSet, Subject, TriMesh};

pub const MIN_RESOLUTION: usize = 200;
/// Spread used by the distortion presets.
pub const DISTORTION: f64 = 0.15;

/// Generator parameters of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassParams {
    /// Ellipse semi-axes along x and y.
    pub axes: [f64; 2],
    pub cusp_height: f64,
    pub cusp_width: f64,
    /// Cusp centres sit at (0, ±cusp_offset·b).
    pub cusp_offset: f64,
    pub pit_depth: f64,
    pub pit_width: f64,
    /// Pit centres at (±pit_position[0]·a, pit_position[1]·b).
    pub pit_position: [f64; 2],
    /// Per-subject spread of the aspect ratio and pit placement, centred on
    /// the class values.
    #[serde(default)]
    pub distortion: f64,
}

impl Default for ClassParams {
    fn default() -> Self {
        Self {
            axes: [1.0, 0.8],
            cusp_height: 0.35,
            cusp_width: 0.25,
            cusp_offset: 0.8,
            pit_depth: 0.15,
            pit_width: 0.2,
            pit_position: [0.55, 0.0],
            distortion: 0.0,
        }
    }
}

impl ClassParams {
    pub fn flat() -> Self {
        Self {
            cusp_height: 0.0,
            pit_depth: 0.0,
            ..Self::default()
        }
    }

    fn cusp_centres(&self) -> [Vector2<f64>; 2] {
        let b = self.axes[1];
        [Vector2::new(0.0, -self.cusp_offset * b), Vector2::new(0.0, self.cusp_offset * b)]
    }

    fn pit_centres(&self) -> [Vector2<f64>; 2] {
        let [a, b] = self.axes;
        let [px, py] = self.pit_position;
        [Vector2::new(-px * a, py * b), Vector2::new(px * a, py * b)]
    }

    pub fn height(&self, p: &Vector2<f64>) -> f64 {
        let g = |c: &Vector2<f64>, w: f64| (-(p - c).norm_squared() / (2.0 * w * w)).exp();
        let mut z = 0.0;
        if self.cusp_height != 0.0 {
            for c in self.cusp_centres() {
                z += self.cusp_height * g(&c, self.cusp_width);
            }
        }
        if self.pit_depth != 0.0 {
            for c in self.pit_centres() {
                z -= self.pit_depth * g(&c, self.pit_width);
            }
        }
        z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    CurvatureDiff,
    DistortionDiff,
    Mixed,
    Null,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "curvature-diff" => Ok(Self::CurvatureDiff),
            "distortion-diff" => Ok(Self::DistortionDiff),
            "mixed" => Ok(Self::Mixed),
            "null" => Ok(Self::Null),
            other => Err(Error::InvalidParameter(format!("unknown preset '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub class_params: [ClassParams; 2],
    /// In-plane jitter in units of the ring spacing.
    pub noise_sigma: f64,
    /// Relative per-subject variation of the shape parameters.
    pub param_sigma: f64,
    pub resolution: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            class_params: [ClassParams::default(), ClassParams::default()],
            noise_sigma: 0.15,
            param_sigma: 0.03,
            resolution: 1200,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn preset(preset: Preset, seed: u64) -> Self {
        let base = ClassParams::default();
        let sharp_flat = |mut p: ClassParams| {
            p.cusp_width *= 2.0;
            p
        };
        let distorted = |mut p: ClassParams| {
            p.distortion = DISTORTION;
            p
        };
        let (a, b, param_sigma) = match preset {
            Preset::CurvatureDiff => (base.clone(), sharp_flat(base), 0.03),
            Preset::DistortionDiff => (ClassParams::flat(), distorted(ClassParams::flat()), 0.03),
            Preset::Mixed => (base.clone(), distorted(sharp_flat(base)), 0.03),
            Preset::Null => (base.clone(), base, 0.0),
        };
        Self {
            class_params: [a, b],
            param_sigma,
            seed,
            ..Self::default()
        }
    }

    pub fn rng(&self, class_id: usize, subject_id: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((class_id as u64) << 32) | subject_id as u64);
        rng
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

/// Ring counts for a disk of about `resolution` vertices.
pub fn ring_counts(resolution: usize) -> Vec<usize> {
    let rings = (((resolution - 1) as f64 / PI).sqrt()).round().max(1.0) as usize;
    let c = 2.0 * (resolution - 1) as f64 / (rings * (rings + 1)) as f64;
    (1..=rings).map(|k| ((c * k as f64).round() as usize).max(3)).collect()
}

fn perturb(p: &ClassParams, sigma: f64, rng: &mut ChaCha8Rng) -> ClassParams {
    let mut z = || normal(rng).clamp(-3.0, 3.0);
    let mut q = p.clone();
    if sigma > 0.0 {
        let mut f = |x: f64| x * (1.0 + sigma * z());
        q.axes = [f(p.axes[0]), f(p.axes[1])];
        q.cusp_height = f(p.cusp_height);
        q.cusp_width = f(p.cusp_width);
        q.pit_depth = f(p.pit_depth);
        q.pit_width = f(p.pit_width);
        q.pit_position = [f(p.pit_position[0]), p.pit_position[1] + sigma * z()];
    }
    if p.distortion > 0.0 {
        let d = p.distortion;
        q.axes[1] *= 1.0 + d * z();
        q.pit_position[0] *= 1.0 + d * z();
        q.pit_position[1] += d * z();
    }
    q
}

/// Generates one subject of class `class_id`.
pub fn gen_surface(spec: &SynthSpec, class_id: usize, subject_id: usize) -> Result<(TriMesh, LandmarkSet)> {
    if spec.resolution < MIN_RESOLUTION {
        return Err(Error::ResolutionTooLow(spec.resolution));
    }
    let base = spec
        .class_params
        .get(class_id)
        .ok_or_else(|| Error::InvalidParameter(format!("class {class_id} not in spec")))?;
    let mut rng = spec.rng(class_id, subject_id);
    let params = perturb(base, spec.param_sigma, &mut rng);

    let counts = ring_counts(spec.resolution);
    let rings = counts.len();
    let outer = *counts.last().expect("at least one ring");
    let (polar, faces) = primitives::ring_disk(&counts);
    let dr = 1.0 / rings as f64;
    let clip = 0.3;
    let plane: Vec<Vector2<f64>> = polar
        .iter()
        .map(|&(k, t)| {
            if k == rings {
                let dt = (spec.noise_sigma * normal(&mut rng)).clamp(-clip, clip) * 2.0 * PI / outer as f64;
                Vector2::new((t + dt).cos(), (t + dt).sin())
            } else {
                let r = k as f64 * dr;
                let jx = (spec.noise_sigma * normal(&mut rng)).clamp(-clip, clip) * dr;
                let jy = (spec.noise_sigma * normal(&mut rng)).clamp(-clip, clip) * dr;
                Vector2::new(r * t.cos() + jx, r * t.sin() + jy)
            }
        })
        .collect();
    let [a, b] = params.axes;
    let xy: Vec<Vector2<f64>> = plane.iter().map(|p| Vector2::new(a * p.x, b * p.y)).collect();
    let verts: Vec<Vector3<f64>> = xy.iter().map(|p| Vector3::new(p.x, p.y, params.height(p))).collect();
    let mesh = TriMesh::new(verts, faces)?;

    let nearest = |c: &Vector2<f64>, boundary_only: bool| -> usize {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, p) in xy.iter().enumerate() {
            if boundary_only && !mesh.is_boundary(i) {
                continue;
            }
            let d = (p - c).norm();
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    };
    let [c1, c2] = params.cusp_centres();
    let [p1, p2] = params.pit_centres();
    let lm = vec![nearest(&c1, true), nearest(&c2, true), nearest(&p1, false), nearest(&p2, false)];
    let lm = LandmarkSet::new(lm, mesh.num_vertices())?;
    Ok((mesh, lm))
}

pub fn class_label(class_id: usize) -> String {
    format!("class{class_id}")
}

/// Generates `n_per_class` subjects for each of the two classes.
pub fn gen_dataset(spec: &SynthSpec, n_per_class: usize) -> Result<Dataset> {
    if n_per_class < 2 {
        return Err(Error::InvalidParameter("need at least 2 subjects per class".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..2).flat_map(|c| (0..n_per_class).map(move |s| (c, s))).collect();
    let subjects = jobs
        .par_iter()
        .map(|&(c, s)| {
            let (mesh, landmarks) = gen_surface(spec, c, s)?;
            Ok(Subject {
                name: format!("c{c}_s{s:03}"),
                mesh,
                landmarks,
                label: class_label(c),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { subjects })
}

/// Writes meshes, landmark files, `manifest.csv` and `spec.json` into `dir`.
pub fn write_dataset(ds: &Dataset, spec: &SynthSpec, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rows = Vec::with_capacity(ds.len());
    for s in &ds.subjects {
        let mesh_name = format!("{}.obj", s.name);
        let lmk_name = format!("{}.lmk", s.name);
        write_obj(&s.mesh, dir.join(&mesh_name))?;
        write_landmarks(&s.landmarks, dir.join(&lmk_name))?;
        rows.push((mesh_name, lmk_name, s.label.clone()));
    }
    write_manifest(dir.join("manifest.csv"), &rows)?;
    let spec_path = dir.join("spec.json");
    let json = serde_json::to_string_pretty(spec)?;
    std::fs::write(&spec_path, json + "\n").map_err(|e| Error::io(spec_path, e))
}
