//! Manifest-driven ingestion of recorded signals.
//!
//! A manifest is a JSON document:
//!
//! ```json
//! {
//!   "target_condition": "load3",
//!   "ratios": [0.8, 0.1, 0.1],
//!   "signals": [
//!     {"condition_id": "load0", "label": 0, "path": "load0_c0.csv",
//!      "class_count": 10, "D": 1024, "stride": 512}
//!   ]
//! }
//! ```
//!
//! Signal paths are relative to the manifest. `.csv` files hold one real per
//! line; any other extension is read as raw little-endian `f64`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{segment_signal, SignalRecord, TaskDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub condition_id: String,
    pub label: usize,
    pub path: PathBuf,
    pub class_count: usize,
    #[serde(rename = "D")]
    pub window_len: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub target_condition: String,
    #[serde(default = "default_ratios")]
    pub ratios: (f64, f64, f64),
    pub signals: Vec<ManifestEntry>,
}

fn default_ratios() -> (f64, f64, f64) {
    (0.8, 0.1, 0.1)
}

/// Tasks in order of first appearance in the manifest. The target task
/// carries its train/valid/test split; auxiliary tasks are whole pools.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub tasks: Vec<TaskDataset>,
    pub target_condition: String,
    pub ratios: (f64, f64, f64),
    /// Declared class count per condition.
    pub class_counts: BTreeMap<String, usize>,
}

impl LoadedManifest {
    pub fn target(&self) -> Option<&TaskDataset> {
        self.tasks
            .iter()
            .find(|t| t.condition_id() == self.target_condition)
    }

    pub fn auxiliary(&self) -> impl Iterator<Item = &TaskDataset> {
        self.tasks
            .iter()
            .filter(|t| t.condition_id() != self.target_condition)
    }
}

fn ingest(path: &Path, line: Option<usize>, message: impl Into<String>) -> Error {
    Error::Ingestion {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn load_manifest(path: &Path) -> Result<LoadedManifest> {
    let text = fs::read_to_string(path).map_err(|e| ingest(path, None, e.to_string()))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| ingest(path, Some(e.line()), format!("malformed manifest: {e}")))?;
    if manifest.signals.is_empty() {
        return Err(ingest(path, None, "manifest lists no signals"));
    }
    let base = path.parent().unwrap_or_else(|| Path::new("."));

    // condition -> (window_len, stride, class_count)
    let mut shape: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    let mut order: Vec<&str> = Vec::new();
    let mut samples: BTreeMap<&str, Vec<super::Sample>> = BTreeMap::new();
    for (row, entry) in manifest.signals.iter().enumerate() {
        let at = |m: String| ingest(path, None, format!("signal #{row} ({}): {m}", entry.path.display()));
        if entry.window_len == 0 || entry.stride == 0 || entry.class_count == 0 {
            return Err(at("D, stride and class_count must be positive".into()));
        }
        if entry.label >= entry.class_count {
            return Err(at(format!(
                "label {} outside the declared {} classes",
                entry.label, entry.class_count
            )));
        }
        let declared = (entry.window_len, entry.stride, entry.class_count);
        match shape.get(entry.condition_id.as_str()) {
            Some(&prev) if prev != declared => {
                return Err(at(format!(
                    "inconsistent (D, stride, class_count) {declared:?} for condition `{}`, earlier {prev:?}",
                    entry.condition_id
                )))
            }
            Some(_) => {}
            None => {
                shape.insert(&entry.condition_id, declared);
                order.push(&entry.condition_id);
            }
        }
        let file = base.join(&entry.path);
        let series = read_signal(&file)?;
        let record = SignalRecord {
            series,
            condition_id: entry.condition_id.clone(),
            label: entry.label,
            source: file.display().to_string(),
        };
        let windows = segment_signal(&record, entry.window_len, entry.stride)
            .map_err(|e| ingest(&file, None, e.to_string()))?;
        samples.entry(&entry.condition_id).or_default().extend(windows);
    }
    if !shape.contains_key(manifest.target_condition.as_str()) {
        return Err(ingest(
            path,
            None,
            format!("target condition `{}` has no signals", manifest.target_condition),
        ));
    }
    let mut tasks = Vec::with_capacity(order.len());
    let mut class_counts = BTreeMap::new();
    for cond in order {
        let (d, _, classes) = shape[cond];
        let mut task = TaskDataset::new(cond, d, samples.remove(cond).unwrap())?;
        if cond == manifest.target_condition {
            task.split_per_class(manifest.ratios)?;
        }
        class_counts.insert(cond.to_string(), classes);
        tasks.push(task);
    }
    Ok(LoadedManifest {
        tasks,
        target_condition: manifest.target_condition,
        ratios: manifest.ratios,
        class_counts,
    })
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Reads a single-column CSV or a raw little-endian `f64` file.
pub fn read_signal(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| ingest(path, None, e.to_string()))?;
    let values = if is_csv(path) {
        let text = String::from_utf8(bytes).map_err(|_| ingest(path, None, "not UTF-8 text"))?;
        let mut v = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let x: f64 = line
                .parse()
                .map_err(|_| ingest(path, Some(i + 1), format!("not a real number: `{line}`")))?;
            if !x.is_finite() {
                return Err(ingest(path, Some(i + 1), "non-finite value"));
            }
            v.push(x);
        }
        v
    } else {
        if bytes.len() % 8 != 0 {
            return Err(ingest(path, None, format!("{} bytes is not a whole number of f64", bytes.len())));
        }
        let v: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(ingest(path, None, format!("non-finite value at index {i}")));
        }
        v
    };
    if values.is_empty() {
        return Err(ingest(path, None, "empty signal"));
    }
    Ok(values)
}

/// Writes a signal in the format implied by the extension.
pub fn write_signal(path: &Path, series: &[f64]) -> Result<()> {
    let bytes = if is_csv(path) {
        let mut s = String::with_capacity(series.len() * 20);
        for x in series {
            s.push_str(&format!("{x:?}\n"));
        }
        s.into_bytes()
    } else {
        series.iter().flat_map(|x| x.to_le_bytes()).collect()
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_manifest(dir: &Path, m: &Manifest) -> PathBuf {
        let p = dir.join("manifest.json");
        fs::write(&p, serde_json::to_string_pretty(m).unwrap()).unwrap();
        p
    }

    fn entry(cond: &str, label: usize, file: &str, classes: usize) -> ManifestEntry {
        ManifestEntry {
            condition_id: cond.into(),
            label,
            path: file.into(),
            class_count: classes,
            window_len: 8,
            stride: 4,
        }
    }

    #[test]
    fn four_conditions_ten_classes() {
        let dir = tempfile::tempdir().unwrap();
        let mut signals = Vec::new();
        for c in 0..4 {
            for l in 0..10 {
                let name = format!("c{c}_l{l}.{}", if l % 2 == 0 { "csv" } else { "bin" });
                let series: Vec<f64> = (0..40).map(|i| (i * (l + 1) + c) as f64 * 0.01).collect();
                write_signal(&dir.path().join(&name), &series).unwrap();
                signals.push(entry(&format!("cond{c}"), l, &name, 10));
            }
        }
        let m = Manifest {
            target_condition: "cond3".into(),
            ratios: (0.8, 0.1, 0.1),
            signals,
        };
        let loaded = load_manifest(&write_manifest(dir.path(), &m)).unwrap();
        assert_eq!(loaded.tasks.len(), 4);
        for t in &loaded.tasks {
            assert_eq!(t.class_set().len(), 10);
            // (40 - 8) / 4 + 1 windows per class
            assert_eq!(t.len(), 90);
        }
        assert_eq!(loaded.auxiliary().count(), 3);
        let target = loaded.target().unwrap();
        assert!(target.splits().contains(&crate::data::Split::Test));
    }

    #[test]
    fn csv_and_binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let series = vec![0.1, -2.5, 1e-7, 3.0];
        for name in ["s.csv", "s.f64"] {
            let p = dir.path().join(name);
            write_signal(&p, &series).unwrap();
            assert_eq!(read_signal(&p).unwrap(), series);
        }
    }

    #[test]
    fn empty_manifest_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m = Manifest {
            target_condition: "x".into(),
            ratios: (0.8, 0.1, 0.1),
            signals: vec![],
        };
        assert!(matches!(
            load_manifest(&write_manifest(dir.path(), &m)),
            Err(Error::Ingestion { .. })
        ));
    }

    #[test]
    fn label_outside_class_set_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_signal(&dir.path().join("a.csv"), &[0.0; 20]).unwrap();
        let m = Manifest {
            target_condition: "x".into(),
            ratios: (0.8, 0.1, 0.1),
            signals: vec![entry("x", 3, "a.csv", 3)],
        };
        let err = load_manifest(&write_manifest(dir.path(), &m)).unwrap_err();
        assert!(err.to_string().contains("label 3"), "{err}");
    }

    #[test]
    fn inconsistent_window_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_signal(&dir.path().join("a.csv"), &[0.0; 20]).unwrap();
        let mut second = entry("x", 1, "a.csv", 2);
        second.window_len = 6;
        let m = Manifest {
            target_condition: "x".into(),
            ratios: (0.8, 0.1, 0.1),
            signals: vec![entry("x", 0, "a.csv", 2), second],
        };
        assert!(load_manifest(&write_manifest(dir.path(), &m)).is_err());
    }

    #[test]
    fn missing_file_and_bad_line_report_context() {
        let dir = tempfile::tempdir().unwrap();
        let m = Manifest {
            target_condition: "x".into(),
            ratios: (0.8, 0.1, 0.1),
            signals: vec![entry("x", 0, "nope.csv", 2)],
        };
        let err = load_manifest(&write_manifest(dir.path(), &m)).unwrap_err();
        assert!(err.to_string().contains("nope.csv"));

        let p = dir.path().join("bad.csv");
        fs::write(&p, "1.0\n2.0\nabc\n").unwrap();
        match read_signal(&p).unwrap_err() {
            Error::Ingestion { line, .. } => assert_eq!(line, Some(3)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn malformed_json_has_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        fs::write(&p, "{\n  \"target_condition\": \"x\",\n  \"signals\": [ oops ]\n}").unwrap();
        match load_manifest(&p).unwrap_err() {
            Error::Ingestion { line, .. } => assert_eq!(line, Some(3)),
            e => panic!("unexpected {e}"),
        }
    }
}
