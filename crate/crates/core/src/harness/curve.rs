//! Macro-F1 as a function of the privacy budget, per training strategy.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dpsgd::Budget;
use crate::error::{Error, Result};
use crate::model::TrainStrategy;

use super::config::ExperimentConfig;
use super::record::{ResultsStore, RunRecord};
use super::run::{run, run_and_record};
use super::svg::{line_chart, Series};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub strategy: String,
    pub epsilon: Budget,
    pub macro_f1: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct CurveReport {
    pub eps: Vec<Budget>,
    pub strategies: Vec<TrainStrategy>,
    pub points: Vec<CurvePoint>,
    pub records: Vec<RunRecord>,
}

impl CurveReport {
    fn point(&self, strategy: &str, eps: Budget) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.strategy == strategy && p.epsilon == eps)
    }

    /// One row per strategy, one macro-F1 column per budget.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("strategy");
        for e in &self.eps {
            let _ = write!(out, ",{e}");
        }
        out.push('\n');
        for s in &self.strategies {
            let name = s.to_string();
            out.push_str(&name);
            for &e in &self.eps {
                let f1 = self.point(&name, e).map_or(f64::NAN, |p| p.macro_f1);
                let _ = write!(out, ",{f1}");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_svg(&self) -> String {
        let series: Vec<Series> = self
            .strategies
            .iter()
            .map(|s| {
                let name = s.to_string();
                Series {
                    points: self
                        .eps
                        .iter()
                        .filter_map(|&e| self.point(&name, e).map(|p| (e.value(), p.macro_f1)))
                        .collect(),
                    name,
                }
            })
            .collect();
        line_chart("macro-F1 vs privacy budget", "epsilon", "macro-F1", &series)
    }
}

/// One run per (strategy, ε) pair; strategies come from `config.strategies()`.
pub fn privacy_curve(config: &ExperimentConfig, eps: &[Budget], store: Option<&ResultsStore>) -> Result<CurveReport> {
    if eps.is_empty() {
        return Err(Error::arg("epsilon list is empty"));
    }
    let strategies = config.strategies();
    let mut report = CurveReport {
        eps: eps.to_vec(),
        strategies: strategies.clone(),
        points: Vec::new(),
        records: Vec::new(),
    };
    for &strategy in &strategies {
        for &e in eps {
            let mut c = config.clone();
            c.strategy = strategy;
            c.epsilon = e;
            let out = match store {
                Some(s) => run_and_record(&c, s)?,
                None => run(&c)?,
            };
            report.points.push(CurvePoint {
                strategy: strategy.to_string(),
                epsilon: e,
                macro_f1: out.record.macro_f1,
                accuracy: out.record.accuracy,
            });
            report.records.push(out.record);
        }
    }
    Ok(report)
}
