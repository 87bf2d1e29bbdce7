//! Artifact serialization and the run manifest.
//!
//! All writers produce byte-stable output: floats use the shortest
//! round-trip representation, map-like content is emitted in sorted order,
//! and nothing carries a timestamp. The manifest lists every written file
//! with its SHA-256 digest.


use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dependence::{AssocMethod, AssociationMatrix, SbSeries};
use crate::error::{Error, Result};
use crate::grid::GridMeta;
use crate::pipeline::analysis::{EnsoRow, IodRow};
use crate::rmt::EsdRow;
use crate::sts::TimeStamp;
use crate::trim::TrimResult;

/// One file recorded in the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub stage: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Machine-readable record of a run's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: Option<u64>,
    /// Echo of the run configuration.
    pub config: serde_json::Value,
    pub outputs: Vec<ManifestEntry>,
    pub skipped_windows: Vec<String>,
    pub warnings: Vec<String>,
    /// Stage name of the failure when the run aborted early.
    pub failed_stage: Option<String>,
    pub error: Option<String>,
}

/// Collects written files and their digests.
#[derive(Debug)]
pub struct ArtifactSink {
    root: PathBuf,
    entries: Vec<ManifestEntry>,
}

impl ArtifactSink {
    pub fn new(root: impl Into<PathBuf>) -> Result<ArtifactSink> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(ArtifactSink {
            root,
            entries: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes bytes under the sink root and records the digest.
    pub fn write(&mut self, name: &str, stage: &str, content: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
        let digest = Sha256::digest(content);
        self.entries.push(ManifestEntry {
            path: name.to_string(),
            stage: stage.to_string(),
            bytes: content.len() as u64,
            sha256: hex::encode(digest),
        });
        Ok(path)
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    /// Writes the manifest itself (not listed among its own outputs).
    pub fn finish(mut self, mut manifest: Manifest) -> Result<PathBuf> {
        self.entries.sort_by(|a, b| a.path.cmp(&b.path));
        manifest.outputs = self.entries;
        let path = self.root.join("manifest.json");
        let text = to_json(&manifest)?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("json serialization: {e}")))?;
    text.push('\n');
    Ok(text)
}

/// Association matrix as wide CSV: `grid_id,<ids...>`, one row per grid.
pub fn assoc_to_csv(assoc: &AssociationMatrix) -> String {
    let p = assoc.p();
    let ids: Vec<&str> = assoc.columns().iter().map(|c| c.grid_id.as_str()).collect();
    let mut out = String::from("grid_id");
    for id in &ids {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    for i in 0..p {
        out.push_str(ids[i]);
        for j in 0..p {
            out.push(',');
            out.push_str(&format!("{}", assoc.entry(i, j)));
        }
        out.push('\n');
    }
    out
}

/// Reads an association matrix from wide CSV, joining grid metadata by id.
pub fn assoc_from_csv(
    path: &Path,
    meta: Option<&[GridMeta]>,
    method: AssocMethod,
) -> Result<AssociationMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse {
        path: path.into(),
        line: 1,
        msg: "empty file".into(),
    })?;
    let ids: Vec<&str> = header.split(',').skip(1).collect();
    let p = ids.len();
    if p == 0 || !header.starts_with("grid_id") {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            msg: "expected header grid_id,<ids...>".into(),
        });
    }
    let mut m = nalgebra::DMatrix::zeros(p, p);
    let mut row_count = 0usize;
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != p + 1 {
            return Err(Error::Parse {
                path: path.into(),
                line: idx as u64 + 2,
                msg: format!("expected {} fields, got {}", p + 1, fields.len()),
            });
        }
        for j in 0..p {
            m[(row_count, j)] = fields[j + 1].parse().map_err(|_| Error::Parse {
                path: path.into(),
                line: idx as u64 + 2,
                msg: format!("bad value {:?}", fields[j + 1]),
            })?;
        }
        row_count += 1;
    }
    if row_count != p {
        return Err(Error::ShapeMismatch {
            context: "association csv",
            left: format!("{p} header ids"),
            right: format!("{row_count} rows"),
        });
    }
    let by_id: std::collections::HashMap<&str, &GridMeta> = meta
        .unwrap_or(&[])
        .iter()
        .map(|g| (g.grid_id.as_str(), g))
        .collect();
    let columns: Vec<GridMeta> = ids
        .iter()
        .map(|id| {
            by_id
                .get(id)
                .map(|&g| g.clone())
                .unwrap_or_else(|| GridMeta::new(id.to_string(), 0.0, 0.0, 1))
        })
        .collect();
    AssociationMatrix::new(m, method, columns)
}

pub fn sb_series_to_csv(series: &SbSeries) -> String {
    let mut out = String::from("window,region,scheme,method,value\n");
    for e in &series.entries {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.window, e.region, e.scheme, e.method, e.value
        ));
    }
    out
}

pub fn esd_rows_to_csv(rows: &[EsdRow]) -> String {
    let mut out = String::from("window,q05,q25,q50,q75,q95,mean,n_significant\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.window, r.q05, r.q25, r.q50, r.q75, r.q95, r.mean, r.n_significant
        ));
    }
    out
}

pub fn enso_rows_to_csv(rows: &[EnsoRow]) -> String {
    let mut out = String::from("region,scheme,method,phase,count,mean,sd,min,max\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.region, r.scheme, r.method, r.phase, r.count, r.mean, r.sd, r.min, r.max
        ));
    }
    out
}

pub fn iod_rows_to_csv(rows: &[IodRow]) -> String {
    let mut out = String::from("region,scheme,method,lag,correlation,n\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.region, r.scheme, r.method, r.lag, r.correlation, r.n
        ));
    }
    out
}

/// Removed singular components as two wide CSVs: left vectors indexed by
/// time, right vectors indexed by grid.
pub fn removed_components_to_csv(
    result: &TrimResult,
    time: &[TimeStamp],
) -> (String, String) {
    let d = result.removed.len();
    let mut left = String::from("time");
    for k in 1..=d {
        left.push_str(&format!(",component_{k}"));
    }
    left.push('\n');
    for (i, stamp) in time.iter().enumerate() {
        left.push_str(&stamp.to_string());
        for c in &result.removed {
            left.push_str(&format!(",{}", c.left[i]));
        }
        left.push('\n');
    }
    let mut right = String::from("grid_id");
    for k in 1..=d {
        right.push_str(&format!(",component_{k}"));
    }
    right.push('\n');
    for (j, meta) in result.trimmed.columns().iter().enumerate() {
        right.push_str(&meta.grid_id);
        for c in &result.removed {
            right.push_str(&format!(",{}", c.right[j]));
        }
        right.push('\n');
    }
    (left, right)
}

/// Serializable trim report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrimReport {
    pub depth: usize,
    pub significant: Option<usize>,
    pub sv_share_removed: f64,
    pub cap_hit: bool,
    pub lambdas: Vec<f64>,
    pub acf_profile: Vec<crate::trim::AcfDepthStat>,
    /// Per-rank null thresholds when a permutation null was used.
    pub thresholds: Option<Vec<f64>>,
    pub n_perm: Option<usize>,
    pub quantile: Option<f64>,
    pub seed: Option<u64>,
}

impl TrimReport {
    pub fn from_result(result: &TrimResult, null: Option<&crate::trim::SvNullModel>) -> TrimReport {
        TrimReport {
            depth: result.depth_d,
            significant: result.significant_s,
            sv_share_removed: result.sv_share_removed,
            cap_hit: result.cap_hit,
            lambdas: result.removed.iter().map(|c| c.lambda).collect(),
            acf_profile: result.acf_profile.clone(),
            thresholds: null.map(|n| n.thresholds.clone()),
            n_perm: null.map(|n| n.n_perm),
            quantile: null.map(|n| n.quantile),
            seed: null.map(|n| n.seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn small_assoc() -> AssociationMatrix {
        let mut m = DMatrix::identity(3, 3);
        m[(0, 1)] = 0.25;
        m[(1, 0)] = 0.25;
        m[(1, 2)] = -0.5;
        m[(2, 1)] = -0.5;
        let grids: Vec<GridMeta> = (0..3)
            .map(|j| GridMeta::new(format!("g{j}"), 10.0, 70.0 + j as f64, 1))
            .collect();
        AssociationMatrix::new(m, AssocMethod::Pearson, grids).unwrap()
    }

    #[test]
    fn assoc_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let a = small_assoc();
        let path = dir.path().join("r.csv");
        std::fs::write(&path, assoc_to_csv(&a)).unwrap();
        let back = assoc_from_csv(&path, Some(a.columns()), AssocMethod::Pearson).unwrap();
        assert_eq!(back.matrix(), a.matrix());
        assert_eq!(back.columns(), a.columns());
    }

    #[test]
    fn sink_records_digests_and_sorts_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut sink = ArtifactSink::new(dir.path().join("out")).unwrap();
        sink.write("b.csv", "stage2", b"2\n").unwrap();
        sink.write("a.csv", "stage1", b"1\n").unwrap();
        let manifest = Manifest {
            tool: "stsa".into(),
            version: "0".into(),
            seed: Some(1),
            config: serde_json::Value::Null,
            outputs: vec![],
            skipped_windows: vec![],
            warnings: vec![],
            failed_stage: None,
            error: None,
        };
        let path = sink.finish(manifest).unwrap();
        let loaded: Manifest =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(loaded.outputs.len(), 2);
        assert_eq!(loaded.outputs[0].path, "a.csv");
        assert_eq!(loaded.outputs[1].path, "b.csv");
        assert_eq!(
            loaded.outputs[0].sha256,
            hex::encode(Sha256::digest(b"1\n"))
        );
    }
}
