//! Signal ingestion, windowing, splitting and episodic sampling.

mod episode;
mod manifest;
mod synthetic;

pub use episode::{sample_episode, Episode};
pub use manifest::{
    load_manifest, read_signal, write_signal, LoadedManifest, Manifest, ManifestEntry,
};
pub use synthetic::{generate_synthetic_task, synthetic_records, SyntheticTaskSpec};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One raw labelled recording under one working condition.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalRecord {
    pub series: Vec<f64>,
    pub condition_id: String,
    pub label: usize,
    pub source: String,
}

/// A fixed-length window and its fault class.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub window: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Valid,
    Test,
}

/// Cuts `record.series` into windows of length `window_len`, `stride` apart,
/// in temporal order.
pub fn segment_signal(record: &SignalRecord, window_len: usize, stride: usize) -> Result<Vec<Sample>> {
    if stride == 0 {
        return Err(Error::Input("stride must be at least 1".into()));
    }
    if window_len == 0 || window_len > record.series.len() {
        return Err(Error::Input(format!(
            "window length {window_len} does not fit a series of length {} ({})",
            record.series.len(),
            record.source
        )));
    }
    let count = (record.series.len() - window_len) / stride + 1;
    Ok((0..count)
        .map(|i| Sample {
            window: record.series[i * stride..i * stride + window_len].to_vec(),
            label: record.label,
        })
        .collect())
}

/// Assigns the first `floor(train * M)` items to train, the next
/// `floor(valid * M)` to valid and the remainder to test.
pub fn chronological_split<T>(items: &[T], ratios: (f64, f64, f64)) -> Result<Vec<Split>> {
    let (tr, va, te) = ratios;
    if items.is_empty() {
        return Err(Error::Input("cannot split an empty list".into()));
    }
    if [tr, va, te].iter().any(|&r| !(r > 0.0)) || ((tr + va + te) - 1.0).abs() > 1e-9 {
        return Err(Error::Input(format!(
            "split ratios must be positive and sum to 1, got {ratios:?}"
        )));
    }
    let m = items.len();
    // the epsilon absorbs representation error such as 0.1 * 30 = 3.0000000000000004
    let n_train = ((tr * m as f64) + 1e-9).floor() as usize;
    let n_valid = ((va * m as f64) + 1e-9).floor() as usize;
    let n_train = n_train.min(m);
    let n_valid = n_valid.min(m - n_train);
    Ok((0..m)
        .map(|i| {
            if i < n_train {
                Split::Train
            } else if i < n_train + n_valid {
                Split::Valid
            } else {
                Split::Test
            }
        })
        .collect())
}

/// All labelled windows recorded under one working condition.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset {
    condition_id: String,
    window_len: usize,
    samples: Vec<Sample>,
    split: Vec<Split>,
}

impl TaskDataset {
    /// Every sample starts in the train split.
    pub fn new(condition_id: impl Into<String>, window_len: usize, samples: Vec<Sample>) -> Result<Self> {
        let condition_id = condition_id.into();
        if samples.is_empty() {
            return Err(Error::Input(format!("task `{condition_id}` has no samples")));
        }
        if let Some(s) = samples.iter().find(|s| s.window.len() != window_len) {
            return Err(Error::Input(format!(
                "task `{condition_id}` has a window of length {} (expected {window_len})",
                s.window.len()
            )));
        }
        let split = vec![Split::Train; samples.len()];
        Ok(TaskDataset {
            condition_id,
            window_len,
            samples,
            split,
        })
    }

    pub fn condition_id(&self) -> &str {
        &self.condition_id
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn splits(&self) -> &[Split] {
        &self.split
    }

    pub fn class_set(&self) -> BTreeSet<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Sample indices of one class, in temporal order.
    pub fn class_indices(&self, label: usize) -> Vec<usize> {
        (0..self.samples.len())
            .filter(|&i| self.samples[i].label == label)
            .collect()
    }

    /// Splits each class chronologically with the given ratios, so every
    /// class is represented in every split it has samples for.
    pub fn split_per_class(&mut self, ratios: (f64, f64, f64)) -> Result<()> {
        for label in self.class_set() {
            let idx = self.class_indices(label);
            let parts = chronological_split(&idx, ratios)?;
            for (i, s) in idx.into_iter().zip(parts) {
                self.split[i] = s;
            }
        }
        Ok(())
    }

    /// Two-way variant of [`split_per_class`](Self::split_per_class):
    /// train/valid only.
    pub fn split_train_valid(&mut self, train_ratio: f64) -> Result<()> {
        if !(train_ratio > 0.0 && train_ratio < 1.0) {
            return Err(Error::Input(format!("train ratio {train_ratio} outside (0, 1)")));
        }
        for label in self.class_set() {
            let idx = self.class_indices(label);
            let n_train = ((train_ratio * idx.len() as f64) + 1e-9).floor() as usize;
            for (k, i) in idx.into_iter().enumerate() {
                self.split[i] = if k < n_train { Split::Train } else { Split::Valid };
            }
        }
        Ok(())
    }

    /// A new dataset holding only the samples of one split (all marked
    /// train in the copy).
    pub fn subset(&self, which: Split) -> Result<TaskDataset> {
        let samples = self
            .samples
            .iter()
            .zip(&self.split)
            .filter(|(_, &s)| s == which)
            .map(|(x, _)| x.clone())
            .collect();
        TaskDataset::new(format!("{}:{which:?}", self.condition_id), self.window_len, samples)
    }

    /// Keeps the listed classes only, relabelled `0..classes.len()` in the
    /// given order.
    pub fn restrict_classes(&self, classes: &[usize]) -> Result<TaskDataset> {
        let mut samples = Vec::new();
        let mut split = Vec::new();
        for (s, &sp) in self.samples.iter().zip(&self.split) {
            if let Some(pos) = classes.iter().position(|&c| c == s.label) {
                samples.push(Sample {
                    window: s.window.clone(),
                    label: pos,
                });
                split.push(sp);
            }
        }
        let mut out = TaskDataset::new(self.condition_id.clone(), self.window_len, samples)?;
        out.split = split;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(len: usize) -> SignalRecord {
        SignalRecord {
            series: (0..len).map(|i| i as f64).collect(),
            condition_id: "c".into(),
            label: 2,
            source: "test".into(),
        }
    }

    #[test]
    fn window_count_and_offsets() {
        let w = segment_signal(&record(10), 4, 2).unwrap();
        assert_eq!(w.len(), 4);
        let starts: Vec<f64> = w.iter().map(|s| s.window[0]).collect();
        assert_eq!(starts, vec![0.0, 2.0, 4.0, 6.0]);
        assert!(w.iter().all(|s| s.label == 2 && s.window.len() == 4));
    }

    #[test]
    fn series_equal_to_window_gives_one() {
        assert_eq!(segment_signal(&record(4), 4, 3).unwrap().len(), 1);
    }

    #[test]
    fn zero_stride_and_oversized_window_rejected() {
        assert!(matches!(segment_signal(&record(10), 4, 0), Err(Error::Input(_))));
        assert!(matches!(segment_signal(&record(3), 4, 1), Err(Error::Input(_))));
    }

    fn counts(s: &[Split]) -> (usize, usize, usize) {
        let c = |x| s.iter().filter(|&&y| y == x).count();
        (c(Split::Train), c(Split::Valid), c(Split::Test))
    }

    #[test]
    fn split_counts() {
        let r = (0.8, 0.1, 0.1);
        assert_eq!(counts(&chronological_split(&[0; 100], r).unwrap()), (80, 10, 10));
        assert_eq!(counts(&chronological_split(&[0; 10], r).unwrap()), (8, 1, 1));
        assert_eq!(counts(&chronological_split(&[0; 3], r).unwrap()), (2, 0, 1));
    }

    #[test]
    fn split_is_ordered() {
        let s = chronological_split(&[0; 37], (0.8, 0.1, 0.1)).unwrap();
        let rank = |x: &Split| match x {
            Split::Train => 0,
            Split::Valid => 1,
            Split::Test => 2,
        };
        assert!(s.windows(2).all(|w| rank(&w[0]) <= rank(&w[1])));
    }

    #[test]
    fn split_rejects_empty_and_bad_ratios() {
        let empty: [u8; 0] = [];
        assert!(chronological_split(&empty, (0.8, 0.1, 0.1)).is_err());
        assert!(chronological_split(&[1], (0.8, 0.1, 0.2)).is_err());
        assert!(chronological_split(&[1], (0.9, 0.1, 0.0)).is_err());
    }

    #[test]
    fn per_class_split_covers_each_class() {
        let samples: Vec<Sample> = (0..40)
            .map(|i| Sample {
                window: vec![i as f64; 2],
                label: i / 20,
            })
            .collect();
        let mut t = TaskDataset::new("x", 2, samples).unwrap();
        t.split_per_class((0.8, 0.1, 0.1)).unwrap();
        for which in [Split::Train, Split::Valid, Split::Test] {
            let sub = t.subset(which).unwrap();
            assert_eq!(sub.class_set().len(), 2, "{which:?}");
        }
    }

    proptest! {
        #[test]
        fn split_is_ordered_and_stable(m in 1usize..300, tr in 0.05f64..0.9, va_share in 0.05f64..0.95) {
            let va = (1.0 - tr) * va_share;
            let te = 1.0 - tr - va;
            let items = vec![(); m];
            let s = chronological_split(&items, (tr, va, te)).unwrap();
            prop_assert_eq!(s.len(), m);
            prop_assert_eq!(&s, &chronological_split(&items, (tr, va, te)).unwrap());
            let rank = |x: &Split| match x { Split::Train => 0, Split::Valid => 1, Split::Test => 2 };
            prop_assert!(s.windows(2).all(|w| rank(&w[0]) <= rank(&w[1])));
            let n_train = s.iter().filter(|x| **x == Split::Train).count();
            prop_assert!(n_train <= (tr * m as f64 + 1e-9) as usize);
        }
    }
}
