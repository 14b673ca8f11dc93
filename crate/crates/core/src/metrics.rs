//! Confusion matrices, accuracy, per-class F1 and macro-F1.
//!
//! On skewed label distributions accuracy rewards predicting the majority
//! class; macro-F1 averages every class with equal weight and exposes it.
//! [`collapse_gap`] is the difference between the two.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `counts[gold][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    labels: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let k = labels.len();
        ConfusionMatrix {
            labels,
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn from_counts(labels: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = labels.len();
        if counts.len() != k || counts.iter().any(|r| r.len() != k) {
            return Err(Error::arg(format!(
                "confusion counts must be {k}×{k} to match the labels"
            )));
        }
        Ok(ConfusionMatrix { labels, counts })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn record(&mut self, gold: usize, predicted: usize) -> Result<()> {
        let k = self.num_classes();
        if gold >= k || predicted >= k {
            return Err(Error::arg(format!(
                "label index out of range: gold {gold}, predicted {predicted}, {k} classes"
            )));
        }
        self.counts[gold][predicted] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    /// Gold support per class.
    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Predicted count per class.
    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.num_classes())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }

    /// Adds another matrix over the same labels.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.labels != other.labels {
            return Err(Error::arg("cannot merge confusion matrices over different labels"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    /// Reorders classes so that new class `i` is old class `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Result<ConfusionMatrix> {
        let k = self.num_classes();
        let mut seen = vec![false; k];
        if order.len() != k || order.iter().any(|&i| i >= k || std::mem::replace(&mut seen[i], true)) {
            return Err(Error::arg("order is not a permutation of the classes"));
        }
        let labels = order.iter().map(|&i| self.labels[i].clone()).collect();
        let counts = order
            .iter()
            .map(|&g| order.iter().map(|&p| self.counts[g][p]).collect())
            .collect();
        Ok(ConfusionMatrix { labels, counts })
    }

    /// CSV with a label header row and a label column; rows are gold classes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("gold\\predicted");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.counts) {
            out.push_str(l);
            for c in row {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let labels: Vec<String> = reader.headers()?.iter().skip(1).map(str::to_string).collect();
        let mut counts = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .skip(1)
                .map(|c| {
                    c.trim().parse::<u64>().map_err(|e| Error::Parse {
                        line: i + 2,
                        message: format!("bad count {c:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            counts.push(row);
        }
        ConfusionMatrix::from_counts(labels, counts)
    }
}

/// Counts gold/predicted index pairs over `labels`.
pub fn confusion(golds: &[usize], preds: &[usize], labels: &[String]) -> Result<ConfusionMatrix> {
    if golds.len() != preds.len() {
        return Err(Error::arg(format!(
            "{} gold labels but {} predictions",
            golds.len(),
            preds.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(labels.to_vec());
    for (&g, &p) in golds.iter().zip(preds) {
        cm.record(g, p)?;
    }
    Ok(cm)
}

/// Whether classes with no gold and no predicted instances enter the macro average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroSupport {
    /// Average over every label, scoring empty classes as F1 = 0.
    #[default]
    Include,
    Exclude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub labels: Vec<String>,
    pub accuracy: f64,
    pub per_class_f1: Vec<f64>,
    pub macro_f1: f64,
    pub support: Vec<u64>,
}

impl MetricReport {
    /// Flat `key=value` lines.
    pub fn to_key_values(&self) -> String {
        let mut out = format!("accuracy={}\nmacro_f1={}\n", self.accuracy, self.macro_f1);
        for ((l, f1), s) in self.labels.iter().zip(&self.per_class_f1).zip(&self.support) {
            let _ = writeln!(out, "f1.{l}={f1}");
            let _ = writeln!(out, "support.{l}={s}");
        }
        out
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn report(cm: &ConfusionMatrix) -> MetricReport {
    report_with(cm, ZeroSupport::Include)
}

/// Per-class F1 is `2PR/(P + R)`; any `0/0` is taken as 0.
pub fn report_with(cm: &ConfusionMatrix, zero_support: ZeroSupport) -> MetricReport {
    let k = cm.num_classes();
    let support = cm.row_sums();
    let predicted = cm.col_sums();
    let per_class_f1: Vec<f64> = (0..k)
        .map(|i| {
            let tp = cm.counts[i][i];
            let precision = ratio(tp, predicted[i]);
            let recall = ratio(tp, support[i]);
            if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            }
        })
        .collect();
    let averaged: Vec<f64> = per_class_f1
        .iter()
        .enumerate()
        .filter(|&(i, _)| zero_support == ZeroSupport::Include || support[i] + predicted[i] > 0)
        .map(|(_, &f)| f)
        .collect();
    let macro_f1 = if averaged.is_empty() {
        0.0
    } else {
        averaged.iter().sum::<f64>() / averaged.len() as f64
    };
    MetricReport {
        labels: cm.labels.clone(),
        accuracy: ratio(cm.trace(), cm.total()),
        per_class_f1,
        macro_f1,
        support,
    }
}

/// `accuracy − macro_f1`: large values flag a model that scores well on
/// accuracy by leaning on frequent classes.
pub fn collapse_gap(cm: &ConfusionMatrix) -> f64 {
    debug_assert!(cm.num_classes() >= 2);
    let r = report(cm);
    r.accuracy - r.macro_f1
}
