//! Confusion matrices and the accuracy / precision / recall / F1 report.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    class_names: Vec<String>,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>) -> Self {
        let c = class_names.len();
        ConfusionMatrix {
            class_names,
            counts: vec![0; c * c],
        }
    }

    /// Matrix with placeholder names `0..classes`.
    pub fn with_classes(classes: usize) -> Self {
        Self::new((0..classes).map(|c| c.to_string()).collect())
    }

    pub fn from_counts(class_names: Vec<String>, counts: Vec<u64>) -> Result<Self> {
        let c = class_names.len();
        if counts.len() != c * c {
            return Err(Error::shape("confusion counts", &[c, c], &[counts.len()]));
        }
        Ok(ConfusionMatrix { class_names, counts })
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn record(&mut self, truth: usize, pred: usize) -> Result<()> {
        let c = self.classes();
        for label in [truth, pred] {
            if label >= c {
                return Err(Error::LabelOutOfRange { label, classes: c });
            }
        }
        self.counts[truth * c + pred] += 1;
        Ok(())
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes() + pred]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.get(i, i)).sum()
    }

    /// Elementwise sum; used to combine shards.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.classes() != other.classes() {
            return Err(Error::shape("confusion merge", &[self.classes()], &[other.classes()]));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// `true\pred,<names...>` header followed by one row per true class.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\pred");
        for name in &self.class_names {
            let _ = write!(s, ",{name}");
        }
        s.push('\n');
        for (t, name) in self.class_names.iter().enumerate() {
            s.push_str(name);
            for p in 0..self.classes() {
                let _ = write!(s, ",{}", self.get(t, p));
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Empty("confusion csv".into()))?;
        let names: Vec<String> = header.split(',').skip(1).map(str::to_string).collect();
        let mut counts = Vec::with_capacity(names.len() * names.len());
        for (row, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != names.len() + 1 || cells[0] != names.get(row).map_or("", String::as_str) {
                return Err(Error::invalid(format!("malformed confusion row {}", row + 2)));
            }
            for cell in &cells[1..] {
                counts.push(
                    cell.trim()
                        .parse()
                        .map_err(|_| Error::invalid(format!("bad count '{cell}' on row {}", row + 2)))?,
                );
            }
        }
        Self::from_counts(names, counts)
    }
}

/// Tallies predictions against ground truth.
pub fn confusion(pred: &[usize], truth: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if pred.len() != truth.len() {
        return Err(Error::shape("confusion", &[pred.len()], &[truth.len()]));
    }
    let mut cm = ConfusionMatrix::with_classes(classes);
    for (&p, &t) in pred.iter().zip(truth) {
        cm.record(t, p)?;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Unweighted mean over classes.
    #[default]
    Macro,
    /// Mean weighted by each class's true-sample count.
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub averaging: Averaging,
    pub per_class: Vec<ClassMetrics>,
}

pub const METRICS_CSV_HEADER: &str = "dataset,split,accuracy,precision,recall,f1";

impl MetricsReport {
    pub fn csv_row(&self, dataset: &str, split: &str) -> String {
        format!(
            "{dataset},{split},{:.6},{:.6},{:.6},{:.6}",
            self.accuracy, self.precision, self.recall, self.f1
        )
    }
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    compute_metrics_with(cm, Averaging::Macro)
}

/// Per-class precision/recall/F1 averaged across classes. A class with no
/// predicted (or no actual) samples scores 0 for the undefined metric and
/// still counts in the macro denominator.
pub fn compute_metrics_with(cm: &ConfusionMatrix, averaging: Averaging) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Empty("confusion matrix".into()));
    }
    let c = cm.classes();
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };

    let per_class: Vec<ClassMetrics> = (0..c)
        .map(|k| {
            let tp = cm.get(k, k);
            let predicted: u64 = (0..c).map(|t| cm.get(t, k)).sum();
            let actual: u64 = (0..c).map(|p| cm.get(k, p)).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, actual);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                name: cm.class_names()[k].clone(),
                precision,
                recall,
                f1,
                support: actual,
            }
        })
        .collect();

    let average = |f: fn(&ClassMetrics) -> f64| match averaging {
        Averaging::Macro => per_class.iter().map(f).sum::<f64>() / c as f64,
        Averaging::Weighted => per_class.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / total as f64,
    };

    Ok(MetricsReport {
        accuracy: cm.trace() as f64 / total as f64,
        precision: average(|m| m.precision),
        recall: average(|m| m.recall),
        f1: average(|m| m.f1),
        averaging,
        per_class,
    })
}
