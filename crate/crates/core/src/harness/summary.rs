//! The `report` step: merges every record and timing in a results directory.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;

use super::record::{load_errors, load_records, load_timings, RunRecord};
use super::timing::{timing_report, TimingReport};

#[derive(Debug, Clone)]
pub struct Summary {
    pub records: Vec<RunRecord>,
    pub timing: TimingReport,
    pub errors: usize,
}

pub fn summarize(dir: &Path) -> Result<Summary> {
    Ok(Summary {
        records: load_records(dir)?,
        timing: timing_report(&load_timings(dir)?),
        errors: load_errors(dir)?.len(),
    })
}

impl Summary {
    pub fn records_csv(&self) -> String {
        let mut out = String::from(
            "config_digest,task,strategy,epsilon_target,realized_epsilon,sigma,lr,seed,trainable_parameters,accuracy,macro_f1,collapse_gap\n",
        );
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.config_digest,
                r.config.task.name(),
                r.strategy,
                r.epsilon_target,
                r.realized.epsilon.map_or_else(|| "inf".to_string(), |e| e.to_string()),
                r.realized.sigma,
                r.learning_rate,
                r.seed,
                r.trainable_parameters,
                r.accuracy,
                r.macro_f1,
                r.collapse_gap
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<12} {:<10} {:>7} {:>9} {:>5} {:>9} {:>9} {:>9}\n",
            "task", "strategy", "eps", "lr", "seed", "accuracy", "macro-F1", "gap"
        );
        for r in &self.records {
            let _ = writeln!(
                out,
                "{:<12} {:<10} {:>7} {:>9.0e} {:>5} {:>9.4} {:>9.4} {:>9.4}",
                r.config.task.name(),
                r.strategy,
                r.epsilon_target.to_string(),
                r.learning_rate,
                r.seed,
                r.accuracy,
                r.macro_f1,
                r.collapse_gap
            );
        }
        let _ = writeln!(out, "\n{} record(s), {} error record(s)\n", self.records.len(), self.errors);
        out.push_str(&self.timing.to_text());
        out
    }
}
