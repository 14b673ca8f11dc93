//! Flat TOML experiment configuration.
//!
//! Every key is top-level; unknown keys are rejected. Documented keys:
//!
//! | key              | meaning                                                          | default            |
//! |------------------|------------------------------------------------------------------|--------------------|
//! | `task`           | `conll_like`, `balanced`, `conll` or `csv`                       | required           |
//! | `train_path`     | input file for `conll` / `csv` tasks (relative to the config)    | –                  |
//! | `test_path`      | optional held-out file; otherwise a seeded 80/20 split           | –                  |
//! | `size`           | synthetic tokens/documents                                       | 10000              |
//! | `classes`        | classes of the `balanced` task                                   | 2                  |
//! | `separation`     | distance between synthetic class means                           | task preset        |
//! | `featurizer`     | `dense`, `window` or `bow`                                       | `dense` / `window` |
//! | `feature_dim`    | featurizer width                                                 | 16                 |
//! | `window`         | half-width of window features                                    | 2                  |
//! | `hidden`         | hidden layer widths, bottom to top                               | `[64, 64]`         |
//! | `activation`     | `tanh` or `relu`                                                 | `tanh`             |
//! | `recurrent`      | width of a recurrent aggregation layer, 0 for none               | 0                  |
//! | `strategy`       | `head`, `last:<k>`, `all`, `recurrent`                           | `all`              |
//! | `strategies`     | strategies compared by `curve`                                   | `[strategy]`       |
//! | `epsilon`        | privacy budget, a number or `"inf"`                              | 1.0                |
//! | `eps_list`       | budgets for `curve` and `sweep`                                  | `[1, 2, 5, "inf"]` |
//! | `delta`          | δ                                                                | 1e-5               |
//! | `clip`           | per-example clipping threshold C                                 | 1.0                |
//! | `lot_size`       | nominal lot size L                                               | 32                 |
//! | `epochs`         | training epochs                                                  | 3                  |
//! | `lr`             | learning rate γ, within [1e-5, 0.1]                              | 0.05               |
//! | `lr_grid`        | learning rates tried by `sweep`                                  | 1e-1 … 1e-5        |
//! | `seed`           | run seed: data generation, split, init, sampling and noise       | 0                  |
//! | `seeds`          | repetitions for trend reports                                    | 5                  |
//! | `test_fraction`  | held-out share when no `test_path` is given                      | 0.2                |
//! | `output_dir`     | results directory; else `$DPKIT_OUTPUT`, else `dpkit-out`        | –                  |

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::accountant::DEFAULT_DELTA;
use crate::dpsgd::{Budget, DEFAULT_CLIP, DEFAULT_LOT_SIZE, LEARNING_RATE_RANGE};
use crate::error::{Error, Result};
use crate::model::{Activation, Featurizer, HiddenLayer, ModelSpec, Task, TrainStrategy};

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "DPKIT_OUTPUT";
pub const DEFAULT_OUTPUT_DIR: &str = "dpkit-out";
pub const DEFAULT_LR_GRID: [f64; 5] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5];
pub const DEFAULT_SEEDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Synthetic tagging with CoNLL'03 tag proportions.
    ConllLike,
    /// Synthetic balanced classification.
    Balanced,
    /// CoNLL column file(s).
    Conll,
    /// Labeled CSV file(s).
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeaturizerKind {
    Dense,
    Window,
    Bow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_path: Option<PathBuf>,
    #[serde(default = "d_size")]
    pub size: usize,
    #[serde(default = "d_classes")]
    pub classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub featurizer: Option<FeaturizerKind>,
    #[serde(default = "d_feature_dim")]
    pub feature_dim: usize,
    #[serde(default = "d_window")]
    pub window: usize,
    #[serde(default = "d_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "d_activation")]
    pub activation: Activation,
    #[serde(default)]
    pub recurrent: usize,
    #[serde(default = "d_strategy", with = "strategy_str")]
    pub strategy: TrainStrategy,
    #[serde(default, with = "strategy_list")]
    pub strategies: Vec<TrainStrategy>,
    #[serde(default = "d_epsilon")]
    pub epsilon: Budget,
    #[serde(default = "d_eps_list")]
    pub eps_list: Vec<Budget>,
    #[serde(default = "d_delta")]
    pub delta: f64,
    #[serde(default = "d_clip")]
    pub clip: f64,
    #[serde(default = "d_lot_size")]
    pub lot_size: usize,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_lr_grid")]
    pub lr_grid: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_seeds")]
    pub seeds: usize,
    #[serde(default = "d_test_fraction")]
    pub test_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn d_size() -> usize {
    10_000
}
fn d_classes() -> usize {
    2
}
fn d_feature_dim() -> usize {
    16
}
fn d_window() -> usize {
    2
}
fn d_hidden() -> Vec<usize> {
    vec![64, 64]
}
fn d_activation() -> Activation {
    Activation::Tanh
}
fn d_strategy() -> TrainStrategy {
    TrainStrategy::All
}
fn d_epsilon() -> Budget {
    Budget::Finite(1.0)
}
fn d_eps_list() -> Vec<Budget> {
    vec![Budget::Finite(1.0), Budget::Finite(2.0), Budget::Finite(5.0), Budget::Infinite]
}
fn d_delta() -> f64 {
    DEFAULT_DELTA
}
fn d_clip() -> f64 {
    DEFAULT_CLIP
}
fn d_lot_size() -> usize {
    DEFAULT_LOT_SIZE
}
fn d_epochs() -> usize {
    3
}
fn d_lr() -> f64 {
    0.05
}
fn d_lr_grid() -> Vec<f64> {
    DEFAULT_LR_GRID.to_vec()
}
fn d_seeds() -> usize {
    DEFAULT_SEEDS
}
fn d_test_fraction() -> f64 {
    0.2
}

mod strategy_str {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::model::TrainStrategy;

    pub fn serialize<S: Serializer>(s: &TrainStrategy, ser: S) -> Result<S::Ok, S::Error> {
        ser.collect_str(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<TrainStrategy, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

mod strategy_list {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::model::TrainStrategy;

    pub fn serialize<S: Serializer>(s: &[TrainStrategy], ser: S) -> Result<S::Ok, S::Error> {
        ser.collect_seq(s.iter().map(|x| x.to_string()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<TrainStrategy>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| s.parse().map_err(serde::de::Error::custom))
            .collect()
    }
}

impl ExperimentConfig {
    /// A config with every default, for the given task.
    pub fn preset(task: TaskKind) -> Self {
        toml::from_str(&format!("task = \"{}\"", task.name())).expect("defaults deserialize")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative data paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.train_path, &mut cfg.test_path].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if matches!(self.task, TaskKind::Conll | TaskKind::Csv) && self.train_path.is_none() {
            return bad(format!("task {} needs train_path", self.task.name()));
        }
        if self.size == 0 || self.feature_dim == 0 || self.lot_size == 0 || self.epochs == 0 {
            return bad("size, feature_dim, lot_size and epochs must be positive".into());
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer widths must be positive".into());
        }
        if self.classes < 2 {
            return bad(format!("classes must be >= 2, got {}", self.classes));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must be in (0, 1), got {}", self.delta));
        }
        if !(self.clip > 0.0) {
            return bad(format!("clip must be positive, got {}", self.clip));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction must be in (0, 1), got {}", self.test_fraction));
        }
        let (lo, hi) = LEARNING_RATE_RANGE;
        if let Some(lr) = std::iter::once(&self.lr).chain(&self.lr_grid).find(|&&lr| !(lo..=hi).contains(&lr)) {
            return bad(format!("learning rate {lr} outside [{lo}, {hi}]"));
        }
        if self.seeds == 0 {
            return bad("seeds must be positive".into());
        }
        if let Some(s) = self.separation {
            if !(s >= 0.0) {
                return bad(format!("separation must be >= 0, got {s}"));
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form, hex-encoded.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Digest of the config with ε cleared: identical for a private run and
    /// its non-private counterpart.
    pub fn pair_key(&self) -> String {
        let mut c = self.clone();
        c.epsilon = Budget::Infinite;
        c.digest()
    }

    pub fn strategies(&self) -> Vec<TrainStrategy> {
        if self.strategies.is_empty() {
            vec![self.strategy]
        } else {
            self.strategies.clone()
        }
    }

    pub fn featurizer_kind(&self) -> FeaturizerKind {
        self.featurizer.unwrap_or(match self.task {
            TaskKind::ConllLike | TaskKind::Balanced => FeaturizerKind::Dense,
            TaskKind::Conll => FeaturizerKind::Window,
            TaskKind::Csv => FeaturizerKind::Bow,
        })
    }

    pub fn featurizer(&self) -> Featurizer {
        let dim = self.feature_dim;
        match self.featurizer_kind() {
            FeaturizerKind::Dense => Featurizer::Dense { dim },
            FeaturizerKind::Window => Featurizer::WindowFeatures {
                window: self.window,
                dim,
            },
            FeaturizerKind::Bow => Featurizer::HashedBagOfWords { dim },
        }
    }

    pub fn model_spec(&self, output_classes: usize, task: Task) -> ModelSpec {
        ModelSpec {
            featurizer: self.featurizer(),
            hidden_layers: self
                .hidden
                .iter()
                .map(|&width| HiddenLayer {
                    width,
                    activation: self.activation,
                })
                .collect(),
            recurrent_width: (self.recurrent > 0).then_some(self.recurrent),
            output_classes,
            task,
        }
    }

    /// `output_dir`, else `$DPKIT_OUTPUT`, else `./dpkit-out`.
    pub fn output_root(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(default_output_root)
    }
}

pub fn default_output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::ConllLike => "conll_like",
            TaskKind::Balanced => "balanced",
            TaskKind::Conll => "conll",
            TaskKind::Csv => "csv",
        }
    }
}
