use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bagging::{bagging_oob, DEFAULT_TREES};
use super::features::{mask_at, p_values, FeatureComponents, FeatureMatrix, ShapeIndexParams};
use crate::error::{Error, Result};

pub const DEFAULT_RHO: f64 = 0.02 * PI;
pub const RHO_RANGE: (f64, f64) = (0.01 * PI, 0.03 * PI);
pub const DEFAULT_P_CUTS: [f64; 5] = [1.0, 1e-1, 1e-2, 1e-3, 1e-4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRate {
    pub label: String,
    pub count: usize,
    pub correct: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub subject: String,
    pub label: String,
    pub predicted: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub overall_accuracy: f64,
    pub per_class: Vec<ClassRate>,
    pub params: ShapeIndexParams,
    /// Grid indices (n, m) of the weights, when they came from the grid.
    pub grid: Option<[usize; 2]>,
    pub num_significant: usize,
    pub significant_vertex_mask: Vec<bool>,
    pub predictions: Vec<Prediction>,
    pub trees: usize,
    pub seed: u64,
}

impl ClassificationReport {
    pub fn significant_indices(&self) -> Vec<usize> {
        self.significant_vertex_mask
            .iter()
            .enumerate()
            .filter_map(|(k, &m)| m.then_some(k))
            .collect()
    }
}

fn masked_columns(c: &FeatureMatrix, mask: &[bool]) -> Vec<Vec<f64>> {
    mask.iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(k, _)| c.column(k))
        .collect()
}

/// Bagging classification of the rows of `c` restricted to the masked columns.
pub fn classify(
    c: &FeatureMatrix,
    mask: &[bool],
    params: ShapeIndexParams,
    trees: usize,
    seed: u64,
) -> Result<ClassificationReport> {
    if mask.len() != c.cols() {
        return Err(Error::Dimension("mask length differs from column count".into()));
    }
    let (labels, y) = c.classes()?;
    let cols = masked_columns(c, mask);
    let oob = bagging_oob(&cols, &y, labels.len(), trees, seed)?;
    let per_class = labels
        .iter()
        .enumerate()
        .map(|(ci, l)| {
            let count = y.iter().filter(|&&v| v == ci).count();
            let correct = y.iter().zip(&oob.predictions).filter(|(t, p)| **t == ci && **p == ci).count();
            ClassRate {
                label: l.clone(),
                count,
                correct,
                rate: correct as f64 / count as f64,
            }
        })
        .collect();
    let predictions = c
        .names
        .iter()
        .zip(&c.labels)
        .zip(&oob.predictions)
        .map(|((n, l), &p)| Prediction {
            subject: n.clone(),
            label: l.clone(),
            predicted: labels[p].clone(),
        })
        .collect();
    Ok(ClassificationReport {
        overall_accuracy: oob.accuracy,
        per_class,
        params,
        grid: None,
        num_significant: cols.len(),
        significant_vertex_mask: mask.to_vec(),
        predictions,
        trees,
        seed,
    })
}

/// One direction of the spherical marching grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    /// (n, m) for grid points; `None` for coordinate axes added because the
    /// grid misses them.
    pub index: Option<[usize; 2]>,
    pub weights: [f64; 3],
}

fn clean(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        0.0
    } else {
        x
    }
}

/// Directions (sin nρ cos mρ, sin nρ sin mρ, cos nρ) in the closed
/// nonnegative octant, with the pole kept once (m = 0). Coordinate axes
/// absent from the grid are appended.
pub fn sms_grid(rho: f64) -> Result<Vec<GridPoint>> {
    if !(rho > 0.0 && rho <= 0.5 * PI) {
        return Err(Error::InvalidParameter(format!("grid density {rho} outside (0, π/2]")));
    }
    let n_max = (PI / rho + 1e-9).floor() as usize;
    let m_count = (2.0 * PI / rho - 1e-9).ceil() as usize;
    let mut out = Vec::new();
    for n in 0..=n_max {
        for m in 0..m_count {
            if n == 0 && m > 0 {
                break;
            }
            let (t, p) = (n as f64 * rho, m as f64 * rho);
            let w = [clean(t.sin() * p.cos()), clean(t.sin() * p.sin()), clean(t.cos())];
            if w.iter().all(|&x| x >= 0.0) {
                let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                out.push(GridPoint {
                    index: Some([n, m]),
                    weights: w.map(|x| x / norm),
                });
            }
        }
    }
    for axis in 0..3 {
        let present = out.iter().any(|g| (g.weights[axis] - 1.0).abs() < 1e-9);
        if !present {
            let mut w = [0.0; 3];
            w[axis] = 1.0;
            out.push(GridPoint { index: None, weights: w });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub rho: f64,
    pub p_cut_grid: Vec<f64>,
    pub seed: u64,
    pub trees: usize,
    pub allow_any_rho: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            rho: DEFAULT_RHO,
            p_cut_grid: DEFAULT_P_CUTS.to_vec(),
            seed: 0,
            trees: DEFAULT_TREES,
            allow_any_rho: false,
        }
    }
}

impl SearchOptions {
    pub fn validate(&self) -> Result<()> {
        if !self.allow_any_rho && !(RHO_RANGE.0 - 1e-12..=RHO_RANGE.1 + 1e-12).contains(&self.rho) {
            return Err(Error::InvalidParameter(format!(
                "rho {} outside [0.01π, 0.03π]",
                self.rho
            )));
        }
        if self.p_cut_grid.is_empty() || self.p_cut_grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParameter("p_cut grid must be non-empty values in [0, 1]".into()));
        }
        if self.trees == 0 {
            return Err(Error::InvalidParameter("need at least one tree".into()));
        }
        Ok(())
    }
}

/// Outcome of one (direction, p_cut) pair; `accuracy` is `None` when the
/// mask was empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub point: GridPoint,
    pub p_cut: f64,
    pub num_significant: usize,
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best: ClassificationReport,
    pub best_p_values: Vec<f64>,
    pub evaluations: Vec<Evaluation>,
}

fn tie_key(e: &Evaluation) -> (usize, usize, f64) {
    match e.point.index {
        Some([n, m]) => (n, m, e.p_cut),
        None => (usize::MAX, usize::MAX, e.p_cut),
    }
}

/// Whether `a` beats `b`: higher accuracy, then fewer significant vertices,
/// then lexicographically smaller (n, m, p_cut).
fn better(a: &Evaluation, b: &Evaluation) -> bool {
    let (aa, ba) = (a.accuracy.unwrap_or(-1.0), b.accuracy.unwrap_or(-1.0));
    if aa != ba {
        return aa > ba;
    }
    if a.num_significant != b.num_significant {
        return a.num_significant < b.num_significant;
    }
    tie_key(a).partial_cmp(&tie_key(b)) == Some(std::cmp::Ordering::Less)
}

/// Evaluates every p_cut at one direction. Identical masks share one fit.
pub fn evaluate_direction(
    comps: &FeatureComponents,
    point: GridPoint,
    opts: &SearchOptions,
) -> Result<Vec<Evaluation>> {
    let c = comps.matrix(point.weights);
    let p = p_values(&c, Some(&comps.eligible))?;
    let mut fitted: Vec<(Vec<bool>, f64)> = Vec::new();
    let mut out = Vec::with_capacity(opts.p_cut_grid.len());
    for &p_cut in &opts.p_cut_grid {
        let mask = mask_at(&p, p_cut, Some(&comps.eligible));
        let count = mask.iter().filter(|&&m| m).count();
        let accuracy = if count == 0 {
            None
        } else if let Some((_, acc)) = fitted.iter().find(|(m, _)| *m == mask) {
            Some(*acc)
        } else {
            let params = ShapeIndexParams::new(point.weights[0], point.weights[1], point.weights[2], p_cut)?;
            let acc = classify(&c, &mask, params, opts.trees, opts.seed)?.overall_accuracy;
            fitted.push((mask, acc));
            Some(acc)
        };
        out.push(Evaluation {
            point,
            p_cut,
            num_significant: count,
            accuracy,
        });
    }
    Ok(out)
}

/// Spherical marching search over shape-index weights and p-value cuts.
pub fn sms_search(comps: &FeatureComponents, opts: &SearchOptions) -> Result<SearchResult> {
    opts.validate()?;
    comps.matrix([0.0, 0.0, 1.0]).classes()?;
    let grid = sms_grid(opts.rho)?;
    let evaluations: Vec<Evaluation> = grid
        .par_iter()
        .map(|&g| evaluate_direction(comps, g, opts))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let skipped = evaluations.iter().filter(|e| e.accuracy.is_none()).count();
    log::info!("searched {} settings, {skipped} with empty masks", evaluations.len());
    let best = evaluations
        .iter()
        .filter(|e| e.accuracy.is_some())
        .fold(None::<&Evaluation>, |acc, e| match acc {
            Some(b) if !better(e, b) => Some(b),
            _ => Some(e),
        })
        .ok_or(Error::EmptyMask)?;
    let c = comps.matrix(best.point.weights);
    let p = p_values(&c, Some(&comps.eligible))?;
    let mask = mask_at(&p, best.p_cut, Some(&comps.eligible));
    let w = best.point.weights;
    let mut report = classify(&c, &mask, ShapeIndexParams::new(w[0], w[1], w[2], best.p_cut)?, opts.trees, opts.seed)?;
    report.grid = best.point.index;
    Ok(SearchResult {
        best: report,
        best_p_values: p,
        evaluations,
    })
}

/// Classification at fixed parameters using the same protocol as the search.
pub fn evaluate_params(comps: &FeatureComponents, params: &ShapeIndexParams, trees: usize, seed: u64) -> Result<ClassificationReport> {
    let c = comps.matrix(params.weights());
    let p = p_values(&c, Some(&comps.eligible))?;
    let mask = mask_at(&p, params.p_cut, Some(&comps.eligible));
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptyMask);
    }
    classify(&c, &mask, *params, trees, seed)
}
