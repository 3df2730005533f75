use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load_landmarks, load_mesh, LandmarkSet, TriMesh};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Subject {
    pub name: String,
    pub mesh: TriMesh,
    pub landmarks: LandmarkSet,
    pub label: String,
}

/// A collection of landmarked surfaces with class labels.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub subjects: Vec<Subject>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    mesh_path: String,
    landmark_path: String,
    label: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    /// Sorted distinct labels.
    pub fn labels(&self) -> Vec<String> {
        let mut l: Vec<String> = self.subjects.iter().map(|s| s.label.clone()).collect();
        l.sort();
        l.dedup();
        l
    }

    /// Class index per subject, by position in the sorted label list.
    pub fn label_indices(&self) -> Vec<usize> {
        let labels = self.labels();
        self.subjects
            .iter()
            .map(|s| labels.iter().position(|l| *l == s.label).unwrap_or(0))
            .collect()
    }

    /// All subjects must carry the same number of landmarks.
    pub fn check_landmarks(&self) -> Result<usize> {
        let n = self.subjects.first().map(|s| s.landmarks.len()).unwrap_or(0);
        for s in &self.subjects {
            if s.landmarks.len() != n {
                return Err(Error::LandmarkCountMismatch {
                    left: n,
                    right: s.landmarks.len(),
                });
            }
        }
        Ok(n)
    }

    /// Exactly two labels, each with at least two subjects.
    pub fn check_binary(&self) -> Result<()> {
        let labels = self.labels();
        if labels.len() != 2 {
            return Err(Error::ClassCount(labels.len()));
        }
        for l in labels {
            let count = self.subjects.iter().filter(|s| s.label == l).count();
            if count < 2 {
                return Err(Error::SmallClass { label: l, count });
            }
        }
        Ok(())
    }
}

/// Loads a `mesh_path,landmark_path,label` CSV; relative paths resolve
/// against the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut reader = csv::Reader::from_path(path)?;
    let mut subjects = Vec::new();
    for row in reader.deserialize() {
        let row: ManifestRow = row?;
        let mesh_path = resolve(&base, &row.mesh_path);
        let mesh = load_mesh(&mesh_path)?;
        let landmarks = load_landmarks(resolve(&base, &row.landmark_path), &mesh)?;
        let name = mesh_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| row.mesh_path.clone());
        subjects.push(Subject {
            name,
            mesh,
            landmarks,
            label: row.label,
        });
    }
    let ds = Dataset { subjects };
    ds.check_landmarks()?;
    Ok(ds)
}

/// Writes a manifest referencing `rows` of (mesh, landmark, label) paths.
pub fn write_manifest(path: impl AsRef<Path>, rows: &[(String, String, String)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    for (m, l, label) in rows {
        w.serialize(ManifestRow {
            mesh_path: m.clone(),
            landmark_path: l.clone(),
            label: label.clone(),
        })?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))?;
    Ok(())
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
