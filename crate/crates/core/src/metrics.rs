//! Classification metrics over (true, predicted) label pairs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_f1: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub support: Vec<usize>,
    /// Classes whose precision or F1 had a zero denominator and counted as 0.
    pub undefined_classes: Vec<usize>,
}

/// Accuracy plus macro-averaged precision and F1 over `classes` labels.
pub fn compute_metrics(pairs: &[(usize, usize)], classes: usize) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(Error::Contract("no predictions to score".into()));
    }
    if let Some(&(t, p)) = pairs.iter().find(|&&(t, p)| t >= classes || p >= classes) {
        return Err(Error::Contract(format!(
            "label pair ({t}, {p}) outside {classes} classes"
        )));
    }
    let mut confusion = vec![vec![0usize; classes]; classes];
    for &(t, p) in pairs {
        confusion[t][p] += 1;
    }
    let support: Vec<usize> = confusion.iter().map(|row| row.iter().sum()).collect();
    let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();

    let mut undefined = Vec::new();
    let (mut p_sum, mut f_sum) = (0.0, 0.0);
    for c in 0..classes {
        let tp = confusion[c][c] as f64;
        let predicted: usize = (0..classes).map(|r| confusion[r][c]).sum();
        let precision = (predicted > 0).then(|| tp / predicted as f64);
        let recall = (support[c] > 0).then(|| tp / support[c] as f64);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        if precision.is_none() || f1.is_none() {
            undefined.push(c);
        }
        p_sum += precision.unwrap_or(0.0);
        f_sum += f1.unwrap_or(0.0);
    }
    Ok(MetricsReport {
        accuracy: correct as f64 / pairs.len() as f64,
        macro_precision: p_sum / classes as f64,
        macro_f1: f_sum / classes as f64,
        confusion,
        support,
        undefined_classes: undefined,
    })
}

impl MetricsReport {
    /// Confusion matrix as CSV with a header row of predicted labels.
    pub fn confusion_csv(&self) -> String {
        let n = self.confusion.len();
        let mut out = String::from("true\\pred");
        for c in 0..n {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
        for (t, row) in self.confusion.iter().enumerate() {
            out.push_str(&t.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}
