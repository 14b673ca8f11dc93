//! Persisted run output.
//!
//! Each results directory holds line-delimited JSON files, one object per line:
//!
//! - `<stem>.results.jsonl`: [`RunRecord`]s. Deterministic: no timestamps,
//!   no wall-clock values, so a rerun from the embedded config and seed
//!   reproduces the line byte for byte.
//! - `<stem>.timings.jsonl`: [`RunTiming`]s, keyed by the SHA-256 of their record line.
//! - `<stem>.errors.jsonl`: [`ErrorRecord`]s for aborted runs.
//!
//! Files are only ever appended to. Concurrent writers use distinct stems; the
//! report step merges every file in the directory.

use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dpsgd::{Budget, EpochStats};
use crate::error::{Error, Result};
use crate::metrics::ConfusionMatrix;

use super::config::ExperimentConfig;

/// Privacy parameters as actually used by the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realized {
    pub sigma: f64,
    pub q: f64,
    pub steps: u64,
    pub delta: f64,
    /// ε recomputed by the accountant after training; absent for non-private runs.
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_digest: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub strategy: String,
    pub epsilon_target: Budget,
    pub learning_rate: f64,
    pub trainable_parameters: usize,
    pub epochs: Vec<EpochStats>,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub collapse_gap: f64,
    pub realized: Realized,
}

impl RunRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    /// SHA-256 of the serialized line, linking timings to records.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json_line().as_bytes()))
    }
}

/// Wall-clock measurements of one run, kept apart from the deterministic record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub record_digest: String,
    pub config_digest: String,
    /// Equal for a private run and its non-private counterpart.
    pub pair_key: String,
    pub private: bool,
    pub strategy: String,
    pub seed: u64,
    pub trainable_parameters: usize,
    pub epoch_seconds: Vec<f64>,
}

impl RunTiming {
    pub fn mean_epoch_seconds(&self) -> f64 {
        if self.epoch_seconds.is_empty() {
            return 0.0;
        }
        self.epoch_seconds.iter().sum::<f64>() / self.epoch_seconds.len() as f64
    }
}

/// Structured description of a failed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
}

impl ErrorRecord {
    pub fn new(err: &Error, config_digest: Option<String>) -> Self {
        ErrorRecord {
            error: err.kind().to_string(),
            message: err.to_string(),
            config_digest,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("error record serializes")
    }
}

const RESULTS: &str = "results.jsonl";
const TIMINGS: &str = "timings.jsonl";
const ERRORS: &str = "errors.jsonl";

/// Append-only writer for one stem inside a results directory.
#[derive(Debug, Clone)]
pub struct ResultsStore {
    dir: PathBuf,
    stem: String,
}

impl ResultsStore {
    pub fn open(dir: impl Into<PathBuf>, stem: impl Into<String>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ResultsStore { dir, stem: stem.into() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, kind: &str) -> PathBuf {
        self.dir.join(format!("{}.{kind}", self.stem))
    }

    fn append(&self, kind: &str, line: &str) -> Result<()> {
        let mut f = OpenOptions::new().create(true).append(true).open(self.path(kind))?;
        writeln!(f, "{line}")?;
        Ok(())
    }

    pub fn append_record(&self, record: &RunRecord) -> Result<()> {
        self.append(RESULTS, &record.to_json_line())
    }

    pub fn append_timing(&self, timing: &RunTiming) -> Result<()> {
        self.append(TIMINGS, &serde_json::to_string(timing)?)
    }

    pub fn append_error(&self, error: &ErrorRecord) -> Result<()> {
        self.append(ERRORS, &error.to_json_line())
    }

    /// Writes an auxiliary (non-append) artifact such as a CSV table or chart.
    pub fn write_artifact(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, contents)?;
        Ok(path)
    }
}

fn load_lines<T: DeserializeOwned>(dir: &Path, kind: &str) -> Result<Vec<T>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(kind)))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for file in files {
        for (i, line) in BufReader::new(fs::File::open(&file)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: format!("{}: {e}", file.display()),
            })?);
        }
    }
    Ok(out)
}

/// Every record in `dir`, merged across stems in file-name order.
pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>> {
    load_lines(dir, RESULTS)
}

pub fn load_timings(dir: &Path) -> Result<Vec<RunTiming>> {
    load_lines(dir, TIMINGS)
}

pub fn load_errors(dir: &Path) -> Result<Vec<ErrorRecord>> {
    load_lines(dir, ERRORS)
}
