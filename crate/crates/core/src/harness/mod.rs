//! Config-driven experiments: single runs, learning-rate sweeps, privacy
//! curves, timing comparisons and result reports.

mod config;
mod curve;
mod record;
mod run;
mod summary;
mod svg;
mod sweep;
mod timing;

pub use config::{
    default_output_root, ExperimentConfig, FeaturizerKind, TaskKind, DEFAULT_LR_GRID, DEFAULT_OUTPUT_DIR,
    DEFAULT_SEEDS, OUTPUT_ENV,
};
pub use curve::{privacy_curve, CurvePoint, CurveReport};
pub use record::{
    load_errors, load_records, load_timings, ErrorRecord, Realized, ResultsStore, RunRecord, RunTiming,
};
pub use run::{prepare_data, privacy_params, run, run_and_record, RunOutcome, BALANCED_SEPARATION, POST_HOC_TOLERANCE};
pub use summary::{summarize, Summary};
pub use svg::{line_chart, Series};
pub use sweep::{sweep_lr, SweepBest, SweepReport, SweepRow};
pub use timing::{mean_difference, timing_report, TimingReport, TimingRow};

/// Median of `xs` (mean of the middle pair for even lengths); NaN when empty.
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}
