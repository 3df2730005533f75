use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{feature_curvatures, shape_terms, FeatureComponents};
use super::mean::{maps_from, mean_surface, rect_params, MeanSurface};
use super::search::{sms_search, SearchOptions, SearchResult};
use crate::error::{Error, Result};
use crate::mesh::{write_landmarks, write_obj, Dataset};
use crate::teichmuller::{QcOptions, SurfaceMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub qc: QcOptions,
    pub search: SearchOptions,
    /// Keep boundary vertices out of the significance mask.
    pub exclude_boundary: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            qc: QcOptions::default(),
            search: SearchOptions::default(),
            exclude_boundary: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Features {
    pub mean: MeanSurface,
    /// Map from the mean surface to each subject; `None` for excluded subjects.
    pub maps: Vec<Option<SurfaceMap>>,
    pub components: FeatureComponents,
}

/// Mean surface, mean-to-subject maps and shape-index terms.
pub fn extract_features(ds: &Dataset, opts: &PipelineOptions) -> Result<Features> {
    ds.check_binary()?;
    ds.check_landmarks()?;
    let params = rect_params(ds)?;
    let mean = mean_surface(ds, &params, &opts.qc)?;
    let maps = maps_from(&mean.mesh, &mean.landmarks, ds, &params, &opts.qc)?;
    let curv_mean = feature_curvatures(&mean.mesh);
    let rows = ds
        .subjects
        .par_iter()
        .zip(&maps)
        .filter_map(|(s, m)| m.as_ref().map(|m| (s, m)))
        .map(|(s, m)| {
            let t = shape_terms(m, &s.mesh, &feature_curvatures(&s.mesh), &curv_mean)?;
            Ok((s.name.clone(), s.label.clone(), t))
        })
        .collect::<Result<Vec<_>>>()?;
    let eligible = if opts.exclude_boundary {
        mean.mesh.boundary_mask().iter().map(|b| !b).collect()
    } else {
        vec![true; mean.mesh.num_vertices()]
    };
    let (names, (labels, terms)): (Vec<_>, (Vec<_>, Vec<_>)) = rows.into_iter().map(|(n, l, t)| (n, (l, t))).unzip();
    let components = FeatureComponents::new(names, labels, terms, eligible)?;
    Ok(Features { mean, maps, components })
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub features: Features,
    pub search: SearchResult,
}

/// Full classification pipeline: mean surface, maps, features and search.
pub fn run_pipeline(ds: &Dataset, opts: &PipelineOptions) -> Result<PipelineOutput> {
    opts.search.validate()?;
    let features = extract_features(ds, opts)?;
    let search = sms_search(&features.components, &opts.search)?;
    Ok(PipelineOutput { features, search })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

/// Writes `mean.obj`, `mean.lmk`, `distances.csv`, `maps/*.json`,
/// `features.csv`, `mask.csv`, `pvalues.csv`, `grid.csv` and `report.json`.
pub fn write_artifacts(out: &PipelineOutput, ds: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir.join("maps")).map_err(|e| Error::io(dir, e))?;
    let f = &out.features;
    write_obj(&f.mean.mesh, dir.join("mean.obj"))?;
    write_landmarks(&f.mean.landmarks, dir.join("mean.lmk"))?;

    let mut dist = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["subject".to_string()];
    header.extend(ds.subjects.iter().map(|s| s.name.clone()));
    dist.write_record(&header)?;
    for (s, row) in ds.subjects.iter().zip(&f.mean.distances) {
        let mut rec = vec![s.name.clone()];
        rec.extend(row.iter().map(|d| format!("{d:e}")));
        dist.write_record(&rec)?;
    }
    write_text(&dir.join("distances.csv"), &csv_string(dist)?)?;

    for (s, m) in ds.subjects.iter().zip(&f.maps) {
        if let Some(m) = m {
            write_json(&dir.join("maps").join(format!("{}.json", s.name)), m)?;
        }
    }
    let best = &out.search.best;
    let c = f.components.matrix(best.params.weights());
    write_text(&dir.join("features.csv"), &c.to_csv()?)?;
    write_text(
        &dir.join("mask.csv"),
        &std::iter::once("vertex".to_string())
            .chain(best.significant_indices().iter().map(|k| k.to_string()))
            .map(|l| l + "\n")
            .collect::<String>(),
    )?;
    let mut p = csv::Writer::from_writer(Vec::new());
    p.write_record(["vertex", "p_value", "eligible"])?;
    for (k, (pv, e)) in out.search.best_p_values.iter().zip(&f.components.eligible).enumerate() {
        p.write_record([k.to_string(), format!("{pv:e}"), e.to_string()])?;
    }
    write_text(&dir.join("pvalues.csv"), &csv_string(p)?)?;

    let mut g = csv::Writer::from_writer(Vec::new());
    g.write_record(["n", "m", "alpha", "beta", "gamma", "p_cut", "num_significant", "accuracy"])?;
    for e in &out.search.evaluations {
        let (n, m) = e.point.index.map_or((String::new(), String::new()), |[n, m]| (n.to_string(), m.to_string()));
        let w = e.point.weights;
        g.write_record([
            n,
            m,
            format!("{:e}", w[0]),
            format!("{:e}", w[1]),
            format!("{:e}", w[2]),
            format!("{:e}", e.p_cut),
            e.num_significant.to_string(),
            e.accuracy.map_or(String::new(), |a| format!("{a}")),
        ])?;
    }
    write_text(&dir.join("grid.csv"), &csv_string(g)?)?;
    write_json(&dir.join("report.json"), best)
}

pub(crate) fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
