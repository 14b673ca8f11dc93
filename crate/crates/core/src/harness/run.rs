//! Single runs: data preparation, training, evaluation and the post-hoc
//! privacy check.

use std::fs::File;
use std::io::BufReader;

use crate::data::{
    balanced_classification, featurize, gen_skewed_tagging, parse_conll, parse_conll_with_labels, parse_labeled_csv,
    Dataset, Examples, LabeledCorpus, SkewSpec, CONLL_LIKE_SEPARATION,
};
use crate::dpsgd::{self, Budget, OptimizerConfig, PrivacyParams};
use crate::error::{Error, Result};
use crate::metrics;
use crate::model::Model;
use crate::rng::Rng;

use super::config::{ExperimentConfig, TaskKind};
use super::record::{ErrorRecord, Realized, ResultsStore, RunRecord, RunTiming};

/// Separation of the balanced preset. The generic default (d = 2) caps a
/// two-class Bayes classifier near 84% accuracy; the balanced sanity task
/// needs a clearly learnable problem.
pub const BALANCED_SEPARATION: f64 = 4.0;

/// Largest relative gap between the realized and the targeted ε.
pub const POST_HOC_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub timing: RunTiming,
}

fn load_corpora(config: &ExperimentConfig) -> Result<(LabeledCorpus, Option<LabeledCorpus>)> {
    let seed = config.seed;
    match config.task {
        TaskKind::ConllLike => {
            let spec = SkewSpec::conll_like(config.size, seed)
                .with_separation(config.separation.unwrap_or(CONLL_LIKE_SEPARATION));
            Ok((gen_skewed_tagging(&spec, config.feature_dim)?, None))
        }
        TaskKind::Balanced => Ok((
            balanced_classification(
                config.classes,
                config.size,
                config.feature_dim,
                config.separation.unwrap_or(BALANCED_SEPARATION),
                seed,
            )?,
            None,
        )),
        TaskKind::Conll => {
            let path = config.train_path.as_ref().expect("validated");
            let train = parse_conll(BufReader::new(File::open(path)?))?;
            let test = match &config.test_path {
                Some(p) => Some(parse_conll_with_labels(BufReader::new(File::open(p)?), &train.label_vocab)?),
                None => None,
            };
            Ok((train, test))
        }
        TaskKind::Csv => {
            let path = config.train_path.as_ref().expect("validated");
            let train = parse_labeled_csv(File::open(path)?)?;
            let test = match &config.test_path {
                Some(p) => Some(remap_labels(parse_labeled_csv(File::open(p)?)?, &train.label_vocab)?),
                None => None,
            };
            Ok((train, test))
        }
    }
}

/// Re-indexes a classification corpus onto `vocab`.
fn remap_labels(mut corpus: LabeledCorpus, vocab: &[String]) -> Result<LabeledCorpus> {
    let map = corpus
        .label_vocab
        .iter()
        .map(|l| {
            vocab
                .iter()
                .position(|v| v == l)
                .ok_or_else(|| Error::Config(format!("test label {l:?} not seen in training data")))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Examples::Classification(docs) = &mut corpus.examples {
        for d in docs {
            d.label = map[d.label];
        }
    }
    corpus.label_vocab = vocab.to_vec();
    Ok(corpus)
}

/// Featurized train and held-out sets. Without a test file the corpus is
/// split 80/20 (by `test_fraction`) at the sentence/document level, seeded by the run seed.
pub fn prepare_data(config: &ExperimentConfig) -> Result<(Dataset<f64>, Dataset<f64>, LabeledCorpus)> {
    let (corpus, test) = load_corpora(config)?;
    let (train, test) = match test {
        Some(t) => (corpus, t),
        None => corpus.split(config.test_fraction, config.seed)?,
    };
    let featurizer = config.featurizer();
    let train_ds = featurize(&train, &featurizer)?;
    let test_ds = featurize(&test, &featurizer)?;
    if train_ds.is_empty() || test_ds.is_empty() {
        return Err(Error::Config("training or held-out set is empty".into()));
    }
    Ok((train_ds, test_ds, train))
}

/// Privacy parameters for `config` over a training set of `n` examples.
pub fn privacy_params(config: &ExperimentConfig, n: usize) -> Result<PrivacyParams> {
    let lot = config.lot_size.min(n);
    match config.epsilon {
        Budget::Infinite => PrivacyParams::non_private(lot, n, config.epochs),
        Budget::Finite(e) => PrivacyParams::calibrated(e, config.delta, config.clip, lot, n, config.epochs),
    }
}

/// Trains and evaluates one configuration. Nothing is written to disk.
pub fn run(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    let (train, test, corpus) = prepare_data(config)?;
    let spec = config.model_spec(train.num_classes(), corpus.task());
    let mut model = Model::<f64>::build(&spec, &mut Rng::new(config.seed).fork(0))?;
    let privacy = privacy_params(config, train.len())?;
    let opt = OptimizerConfig {
        learning_rate: config.lr,
        epochs: config.epochs,
        seed: config.seed,
    };
    let out = dpsgd::train(&mut model, &train, Some(&test), config.strategy, &privacy, &opt)?;

    let realized_eps = out.realized.as_ref().map(|r| r.epsilon);
    if let (Budget::Finite(target), Some(eps)) = (config.epsilon, realized_eps) {
        if eps > target * (1.0 + 1e-12) || (target - eps) / target > POST_HOC_TOLERANCE {
            return Err(Error::Calibration {
                message: format!("post-hoc epsilon {eps} does not match the target"),
                target,
                q: privacy.sampling_rate,
                steps: privacy.steps,
                delta: privacy.delta,
            });
        }
    }

    let report = metrics::report(&out.confusion);
    let record = RunRecord {
        config_digest: config.digest(),
        config: config.clone(),
        seed: config.seed,
        strategy: config.strategy.to_string(),
        epsilon_target: config.epsilon,
        learning_rate: config.lr,
        trainable_parameters: out.mask.trainable_len(&model),
        epochs: out.epochs,
        collapse_gap: metrics::collapse_gap(&out.confusion),
        confusion: out.confusion,
        accuracy: report.accuracy,
        macro_f1: report.macro_f1,
        realized: Realized {
            sigma: privacy.noise_multiplier,
            q: privacy.sampling_rate,
            steps: privacy.steps,
            delta: privacy.delta,
            epsilon: realized_eps,
        },
    };
    let timing = RunTiming {
        record_digest: record.digest(),
        config_digest: record.config_digest.clone(),
        pair_key: config.pair_key(),
        private: privacy.is_private(),
        strategy: record.strategy.clone(),
        seed: config.seed,
        trainable_parameters: record.trainable_parameters,
        epoch_seconds: out.epoch_seconds,
    };
    Ok(RunOutcome { record, timing })
}

/// [`run`], persisting the record and timing, or a structured error record on failure.
pub fn run_and_record(config: &ExperimentConfig, store: &ResultsStore) -> Result<RunOutcome> {
    match run(config) {
        Ok(out) => {
            store.append_record(&out.record)?;
            store.append_timing(&out.timing)?;
            Ok(out)
        }
        Err(e) => {
            store.append_error(&ErrorRecord::new(&e, Some(config.digest())))?;
            Err(e)
        }
    }
}
