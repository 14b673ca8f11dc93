//! Epoch-time comparison of private runs against their non-private counterparts.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::record::RunTiming;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub pair_key: String,
    pub strategy: String,
    pub trainable_parameters: usize,
    pub non_private_seconds: f64,
    pub private_seconds: f64,
    /// Private minus non-private mean epoch time.
    pub difference: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TimingReport {
    pub rows: Vec<TimingRow>,
    /// Timings without a counterpart, excluded from the differences.
    pub warnings: Vec<String>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Mean epoch seconds of `a` minus that of `b`.
pub fn mean_difference(a: &[RunTiming], b: &[RunTiming]) -> f64 {
    mean(a.iter().map(RunTiming::mean_epoch_seconds)) - mean(b.iter().map(RunTiming::mean_epoch_seconds))
}

/// Groups timings by pair key (the config minus ε). Each group with both
/// private and non-private runs yields one row; other groups become warnings.
pub fn timing_report(timings: &[RunTiming]) -> TimingReport {
    let mut groups: BTreeMap<&str, (Vec<RunTiming>, Vec<RunTiming>)> = BTreeMap::new();
    for t in timings {
        let g = groups.entry(&t.pair_key).or_default();
        if t.private {
            g.0.push(t.clone());
        } else {
            g.1.push(t.clone());
        }
    }
    let mut report = TimingReport::default();
    for (key, (private, public)) in groups {
        if private.is_empty() || public.is_empty() {
            for t in private.iter().chain(&public) {
                report.warnings.push(format!(
                    "unpaired {} timing for config {} (strategy {}, seed {})",
                    if t.private { "private" } else { "non-private" },
                    &key[..12.min(key.len())],
                    t.strategy,
                    t.seed
                ));
            }
            continue;
        }
        let p = mean(private.iter().map(RunTiming::mean_epoch_seconds));
        let n = mean(public.iter().map(RunTiming::mean_epoch_seconds));
        report.rows.push(TimingRow {
            pair_key: key.to_string(),
            strategy: public[0].strategy.clone(),
            trainable_parameters: public[0].trainable_parameters,
            non_private_seconds: n,
            private_seconds: p,
            difference: p - n,
        });
    }
    report
}

impl TimingReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pair_key,strategy,trainable_parameters,non_private_seconds,private_seconds,difference\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.pair_key, r.strategy, r.trainable_parameters, r.non_private_seconds, r.private_seconds, r.difference
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<14} {:<10} {:>10} {:>12} {:>12} {:>12}\n",
            "config", "strategy", "params", "non-DP s/ep", "DP s/ep", "difference"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<14} {:<10} {:>10} {:>12.4} {:>12.4} {:>12.4}",
                &r.pair_key[..12.min(r.pair_key.len())],
                r.strategy,
                r.trainable_parameters,
                r.non_private_seconds,
                r.private_seconds,
                r.difference
            );
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}
