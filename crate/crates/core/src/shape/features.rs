use serde::{Deserialize, Serialize};

use super::stats::welch_test;
use crate::diffgeo::{boundary_corrected, curvatures, interpolate_scalar, CurvatureField};
use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::teichmuller::SurfaceMap;

/// Weights of the shape index α|ΔH| + β|ΔK| + γd and the p-value cut.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeIndexParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub p_cut: f64,
}

impl ShapeIndexParams {
    /// Validated constructor: nonnegative unit weights, `p_cut` in [0, 1].
    pub fn new(alpha: f64, beta: f64, gamma: f64, p_cut: f64) -> Result<Self> {
        let w = [alpha, beta, gamma];
        if w.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidParameter(format!("negative shape-index weight in {w:?}")));
        }
        let norm2: f64 = w.iter().map(|x| x * x).sum();
        if (norm2 - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("weights {w:?} are not unit length")));
        }
        if !(0.0..=1.0).contains(&p_cut) {
            return Err(Error::InvalidParameter(format!("p_cut {p_cut} outside [0, 1]")));
        }
        Ok(Self { alpha, beta, gamma, p_cut })
    }

    /// Normalises arbitrary nonnegative weights to unit length.
    pub fn normalized(alpha: f64, beta: f64, gamma: f64, p_cut: f64) -> Result<Self> {
        let n = (alpha * alpha + beta * beta + gamma * gamma).sqrt();
        if !(n > 0.0) {
            return Err(Error::InvalidParameter("all shape-index weights are zero".into()));
        }
        Self::new(alpha / n, beta / n, gamma / n, p_cut)
    }

    pub fn weights(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }
}

/// Curvature fields used for feature extraction, with boundary values
/// replaced by interior-neighbour averages.
pub fn feature_curvatures(mesh: &TriMesh) -> CurvatureField {
    let mut c = curvatures(mesh);
    c.h = boundary_corrected(mesh, &c.h);
    c.k = boundary_corrected(mesh, &c.k);
    c
}

/// Unweighted per-vertex terms of the shape index for one subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeTerms {
    /// |H_mean(v) − H_subject(f(v))| per mean-surface vertex.
    pub dh: Vec<f64>,
    /// |K_mean(v) − K_subject(f(v))|.
    pub dk: Vec<f64>,
    /// Teichmüller distance of the map.
    pub d: f64,
}

impl ShapeTerms {
    pub fn combine(&self, w: [f64; 3]) -> Vec<f64> {
        self.dh
            .iter()
            .zip(&self.dk)
            .map(|(h, k)| w[0] * h + w[1] * k + w[2] * self.d)
            .collect()
    }
}

/// Shape-index terms for `map`, a map from the mean surface onto `subject`.
pub fn shape_terms(
    map: &SurfaceMap,
    subject: &TriMesh,
    curv_subject: &CurvatureField,
    curv_mean: &CurvatureField,
) -> Result<ShapeTerms> {
    let m = curv_mean.h.len();
    if map.images.len() != m || curv_mean.k.len() != m {
        return Err(Error::Dimension(format!(
            "map has {} images, mean surface has {m} vertices",
            map.images.len()
        )));
    }
    if curv_subject.h.len() != subject.num_vertices() {
        return Err(Error::Dimension("subject curvature does not match its mesh".into()));
    }
    let h = interpolate_scalar(subject, &curv_subject.h, &map.images)?;
    let k = interpolate_scalar(subject, &curv_subject.k, &map.images)?;
    Ok(ShapeTerms {
        dh: curv_mean.h.iter().zip(&h).map(|(a, b)| (a - b).abs()).collect(),
        dk: curv_mean.k.iter().zip(&k).map(|(a, b)| (a - b).abs()).collect(),
        d: map.distance,
    })
}

/// Per-vertex shape index c_i for one subject.
pub fn shape_index(
    map: &SurfaceMap,
    subject: &TriMesh,
    curv_subject: &CurvatureField,
    curv_mean: &CurvatureField,
    params: &ShapeIndexParams,
) -> Result<Vec<f64>> {
    Ok(shape_terms(map, subject, curv_subject, curv_mean)?.combine(params.weights()))
}

/// Shape-index terms for every subject, ready to be weighted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureComponents {
    pub names: Vec<String>,
    pub labels: Vec<String>,
    pub terms: Vec<ShapeTerms>,
    /// Columns that may enter the significance mask.
    pub eligible: Vec<bool>,
}

impl FeatureComponents {
    pub fn new(names: Vec<String>, labels: Vec<String>, terms: Vec<ShapeTerms>, eligible: Vec<bool>) -> Result<Self> {
        let m = eligible.len();
        if names.len() != terms.len() || labels.len() != terms.len() {
            return Err(Error::Dimension("names, labels and feature rows differ in length".into()));
        }
        if terms.iter().any(|t| t.dh.len() != m || t.dk.len() != m) {
            return Err(Error::Dimension("feature rows differ in length".into()));
        }
        Ok(Self {
            names,
            labels,
            terms,
            eligible,
        })
    }

    pub fn rows(&self) -> usize {
        self.terms.len()
    }

    pub fn cols(&self) -> usize {
        self.eligible.len()
    }

    pub fn matrix(&self, w: [f64; 3]) -> FeatureMatrix {
        FeatureMatrix {
            values: self.terms.iter().map(|t| t.combine(w)).collect(),
            labels: self.labels.clone(),
            names: self.names.clone(),
        }
    }
}

/// N × M matrix of shape indices, one row per subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub values: Vec<Vec<f64>>,
    pub labels: Vec<String>,
    pub names: Vec<String>,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        self.values.len()
    }

    pub fn cols(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[k]).collect()
    }

    /// Sorted distinct labels and the class index of each row; exactly two
    /// classes of at least two rows each are required.
    pub fn classes(&self) -> Result<(Vec<String>, Vec<usize>)> {
        let mut labels = self.labels.clone();
        labels.sort();
        labels.dedup();
        if labels.len() != 2 {
            return Err(Error::ClassCount(labels.len()));
        }
        let y: Vec<usize> = self
            .labels
            .iter()
            .map(|l| labels.iter().position(|x| x == l).expect("label present"))
            .collect();
        for (c, l) in labels.iter().enumerate() {
            let count = y.iter().filter(|&&v| v == c).count();
            if count < 2 {
                return Err(Error::SmallClass { label: l.clone(), count });
            }
        }
        Ok((labels, y))
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["subject".to_string(), "label".to_string()];
        header.extend((0..self.cols()).map(|k| format!("v{k}")));
        w.write_record(&header)?;
        for ((name, label), row) in self.names.iter().zip(&self.labels).zip(&self.values) {
            let mut rec = vec![name.clone(), label.clone()];
            rec.extend(row.iter().map(|x| format!("{x:e}")));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Per-vertex Welch p-values between the two classes and the mask of
/// eligible vertices with p ≤ `p_cut`. Ineligible vertices get p = 1.
pub fn significant_vertices(c: &FeatureMatrix, p_cut: f64, eligible: Option<&[bool]>) -> Result<(Vec<bool>, Vec<f64>)> {
    let p = p_values(c, eligible)?;
    Ok((mask_at(&p, p_cut, eligible), p))
}

pub fn p_values(c: &FeatureMatrix, eligible: Option<&[bool]>) -> Result<Vec<f64>> {
    let (_, y) = c.classes()?;
    if eligible.is_some_and(|e| e.len() != c.cols()) {
        return Err(Error::Dimension("eligibility mask length differs from column count".into()));
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    Ok((0..c.cols())
        .map(|k| {
            if eligible.is_some_and(|e| !e[k]) {
                return 1.0;
            }
            a.clear();
            b.clear();
            for (row, &cls) in c.values.iter().zip(&y) {
                if cls == 0 { a.push(row[k]) } else { b.push(row[k]) }
            }
            welch_test(&a, &b).p
        })
        .collect())
}

pub fn mask_at(p: &[f64], p_cut: f64, eligible: Option<&[bool]>) -> Vec<bool> {
    p.iter()
        .enumerate()
        .map(|(k, &pk)| pk <= p_cut && eligible.is_none_or(|e| e[k]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn matrix(cols: usize, n_per: usize, shift: Option<(usize, f64)>, seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for class in 0..2 {
            for _ in 0..n_per {
                let mut row: Vec<f64> = (0..cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                if let Some((k, s)) = shift {
                    if class == 1 {
                        row[k] += s;
                    }
                }
                values.push(row);
                labels.push(format!("class{class}"));
            }
        }
        FeatureMatrix {
            names: (0..values.len()).map(|i| format!("s{i}")).collect(),
            values,
            labels,
        }
    }

    #[test]
    fn params_are_validated() {
        assert!(ShapeIndexParams::new(1.0, 0.0, 0.0, 0.5).is_ok());
        assert!(ShapeIndexParams::new(0.6, 0.8, 0.0, 1.0).is_ok());
        assert!(ShapeIndexParams::new(0.5, 0.5, 0.5, 0.1).is_err());
        assert!(ShapeIndexParams::new(-0.6, 0.8, 0.0, 0.1).is_err());
        assert!(ShapeIndexParams::new(1.0, 0.0, 0.0, 1.5).is_err());
        assert!(ShapeIndexParams::normalized(0.0, 0.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn p_cut_one_keeps_every_eligible_vertex() {
        let c = matrix(30, 6, None, 1);
        let eligible: Vec<bool> = (0..30).map(|k| k % 3 != 0).collect();
        let (mask, p) = significant_vertices(&c, 1.0, Some(&eligible)).unwrap();
        assert_eq!(mask, eligible);
        assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn ten_sigma_column_is_always_found() {
        for seed in 0..10 {
            let c = matrix(50, 10, Some((17, 10.0)), seed);
            let (mask, _) = significant_vertices(&c, 1e-4, None).unwrap();
            assert!(mask[17], "seed {seed}");
        }
    }

    #[test]
    fn null_columns_are_calibrated() {
        // independent columns: the selected fraction is binomial(M, p_cut)
        let m = 4000;
        let c = matrix(m, 20, None, 42);
        let (_, p) = significant_vertices(&c, 1.0, None).unwrap();
        for p_cut in [0.1, 0.01, 0.001] {
            let frac = p.iter().filter(|&&x| x <= p_cut).count() as f64 / m as f64;
            let sd = (p_cut * (1.0 - p_cut) / m as f64).sqrt();
            assert!((frac - p_cut).abs() <= 3.0 * sd, "p_cut {p_cut}: {frac}");
        }
    }

    #[test]
    fn class_preconditions() {
        let mut c = matrix(3, 3, None, 0);
        c.labels.iter_mut().for_each(|l| *l = "only".into());
        assert!(matches!(significant_vertices(&c, 0.1, None), Err(Error::ClassCount(1))));
        let mut c = matrix(3, 3, None, 0);
        for l in c.labels.iter_mut().skip(1).take(2) {
            *l = "class1".into();
        }
        assert!(matches!(significant_vertices(&c, 0.1, None), Err(Error::SmallClass { .. })));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let c = matrix(2, 2, None, 0);
        let text = c.to_csv().unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "subject,label,v0,v1");
        assert_eq!(lines.len(), 5);
    }

    proptest! {
        #[test]
        fn shape_index_is_nonnegative(
            dh in prop::collection::vec(0.0f64..5.0, 8),
            dk in prop::collection::vec(0.0f64..5.0, 8),
            d in 0.0f64..2.0,
            w in (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0),
        ) {
            prop_assume!(w.0 + w.1 + w.2 > 1e-6);
            let p = ShapeIndexParams::normalized(w.0, w.1, w.2, 0.5).unwrap();
            let n: f64 = p.weights().iter().map(|x| x * x).sum();
            prop_assert!((n - 1.0).abs() < 1e-9);
            let t = ShapeTerms { dh, dk, d };
            prop_assert!(t.combine(p.weights()).iter().all(|&c| c >= 0.0));
        }

        #[test]
        fn gamma_only_gives_constant_index(dh in prop::collection::vec(0.0f64..5.0, 6), d in 0.0f64..2.0) {
            let t = ShapeTerms { dk: dh.clone(), dh, d };
            prop_assert!(t.combine([0.0, 0.0, 1.0]).iter().all(|&c| c == d));
        }
    }
}
