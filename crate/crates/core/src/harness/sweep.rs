//! Learning-rate sweeps.
//!
//! The grid is searched without privacy and at the tightest searched budget
//! (ε = 1 when listed, else the smallest finite ε). Looser finite budgets reuse
//! the learning rate found at that budget instead of searching again.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dpsgd::{Budget, LEARNING_RATE_RANGE};
use crate::error::{Error, Result};

use super::config::ExperimentConfig;
use super::record::{ResultsStore, RunRecord};
use super::run::{run, run_and_record};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: Budget,
    pub learning_rate: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    /// Whether this budget's rate was searched or reused.
    pub searched: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepBest {
    pub epsilon: Budget,
    pub learning_rate: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub best: Vec<SweepBest>,
    pub records: Vec<RunRecord>,
}

impl SweepReport {
    pub fn best_for(&self, epsilon: Budget) -> Option<&SweepBest> {
        self.best.iter().find(|b| b.epsilon == epsilon)
    }

    /// Long-form macro-F1-vs-learning-rate table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epsilon,learning_rate,macro_f1,accuracy,searched\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.epsilon, r.learning_rate, r.macro_f1, r.accuracy, r.searched
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for b in &self.best {
            let _ = writeln!(out, "epsilon {:>6}  best lr {:>8e}  macro-F1 {:.4}", b.epsilon, b.learning_rate, b.macro_f1);
        }
        out
    }
}

/// Best index by macro-F1; ties go to the larger learning rate.
fn pick_best(rows: &[SweepRow]) -> &SweepRow {
    rows.iter()
        .reduce(|best, r| {
            if r.macro_f1 > best.macro_f1 || (r.macro_f1 == best.macro_f1 && r.learning_rate > best.learning_rate) {
                r
            } else {
                best
            }
        })
        .expect("non-empty grid")
}

fn search_budget(eps: &[Budget]) -> Option<Budget> {
    if eps.contains(&Budget::Finite(1.0)) {
        return Some(Budget::Finite(1.0));
    }
    eps.iter()
        .copied()
        .filter(|e| e.is_finite())
        .min_by(|a, b| a.value().total_cmp(&b.value()))
}

/// Runs the sweep over `config.eps_list`. Records are persisted when `store` is given.
pub fn sweep_lr(config: &ExperimentConfig, grid: &[f64], store: Option<&ResultsStore>) -> Result<SweepReport> {
    if grid.is_empty() {
        return Err(Error::arg("learning-rate grid is empty"));
    }
    let (lo, hi) = LEARNING_RATE_RANGE;
    if let Some(lr) = grid.iter().find(|&&lr| !(lo..=hi).contains(&lr)) {
        return Err(Error::arg(format!("grid learning rate {lr} outside [{lo}, {hi}]")));
    }
    let mut eps = config.eps_list.clone();
    if eps.is_empty() {
        eps.push(config.epsilon);
    }
    let searched = search_budget(&eps);
    let one = |epsilon: Budget, lr: f64| -> Result<RunRecord> {
        let mut c = config.clone();
        c.epsilon = epsilon;
        c.lr = lr;
        let out = match store {
            Some(s) => run_and_record(&c, s)?,
            None => run(&c)?,
        };
        Ok(out.record)
    };

    let mut report = SweepReport {
        rows: Vec::new(),
        best: Vec::new(),
        records: Vec::new(),
    };
    let search: Vec<Budget> = eps
        .iter()
        .copied()
        .filter(|&e| e == Budget::Infinite || Some(e) == searched)
        .collect();
    let mut searched_best = None;
    for &e in &search {
        let mut rows = Vec::with_capacity(grid.len());
        for &lr in grid {
            let rec = one(e, lr)?;
            rows.push(SweepRow {
                epsilon: e,
                learning_rate: lr,
                macro_f1: rec.macro_f1,
                accuracy: rec.accuracy,
                searched: true,
            });
            report.records.push(rec);
        }
        let best = pick_best(&rows);
        report.best.push(SweepBest {
            epsilon: e,
            learning_rate: best.learning_rate,
            macro_f1: best.macro_f1,
        });
        if Some(e) == searched {
            searched_best = Some(best.learning_rate);
        }
        report.rows.extend(rows);
    }
    for &e in eps.iter().filter(|e| !search.contains(e)) {
        let lr = searched_best.expect("a finite budget is always searched when one is listed");
        let rec = one(e, lr)?;
        report.rows.push(SweepRow {
            epsilon: e,
            learning_rate: lr,
            macro_f1: rec.macro_f1,
            accuracy: rec.accuracy,
            searched: false,
        });
        report.best.push(SweepBest {
            epsilon: e,
            learning_rate: lr,
            macro_f1: rec.macro_f1,
        });
        report.records.push(rec);
    }
    Ok(report)
}
