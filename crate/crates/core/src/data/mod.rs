//! Labeled corpora: ingestion, synthetic generation and featurization.

mod conll;
mod featurize;
mod labeled_csv;
mod synth;

pub use conll::{parse_conll, parse_conll_str, parse_conll_with_labels, serialize_conll};
pub use featurize::{bucket, featurize, fnv1a64};
pub use labeled_csv::{parse_labeled_csv, serialize_labeled_csv};
pub use synth::{
    balanced_classification, gen_skewed_classification, gen_skewed_tagging, SkewSpec,
    CONLL_LIKE_SEPARATION, CONLL_TRAIN_TAG_COUNTS, DEFAULT_SEPARATION,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Task;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One token of a tagged sentence. `columns` holds any fields between the
/// token and its tag, kept verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    /// One label index per token.
    pub tags: Vec<usize>,
}

/// A classification example: free text, numeric features, or both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub tokens: Vec<String>,
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Examples {
    Tagging(Vec<Sentence>),
    Classification(Vec<Document>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCorpus {
    pub label_vocab: Vec<String>,
    pub examples: Examples,
}

impl LabeledCorpus {
    pub fn task(&self) -> Task {
        match self.examples {
            Examples::Tagging(_) => Task::SequenceTagging,
            Examples::Classification(_) => Task::Classification,
        }
    }

    /// Sentences or documents.
    pub fn num_items(&self) -> usize {
        match &self.examples {
            Examples::Tagging(s) => s.len(),
            Examples::Classification(d) => d.len(),
        }
    }

    /// Labeled units: tokens for tagging, documents for classification.
    pub fn num_labels(&self) -> usize {
        match &self.examples {
            Examples::Tagging(s) => s.iter().map(|s| s.tags.len()).sum(),
            Examples::Classification(d) => d.len(),
        }
    }

    pub fn gold_labels(&self) -> Vec<usize> {
        match &self.examples {
            Examples::Tagging(s) => s.iter().flat_map(|s| s.tags.iter().copied()).collect(),
            Examples::Classification(d) => d.iter().map(|d| d.label).collect(),
        }
    }

    pub fn label_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.label_vocab.len()];
        for l in self.gold_labels() {
            counts[l] += 1;
        }
        counts
    }

    /// Checks label indices and tag/token alignment.
    pub fn validate(&self) -> Result<()> {
        let k = self.label_vocab.len();
        match &self.examples {
            Examples::Tagging(sents) => {
                for (i, s) in sents.iter().enumerate() {
                    if s.tokens.len() != s.tags.len() {
                        return Err(Error::arg(format!(
                            "sentence {i} has {} tokens but {} tags",
                            s.tokens.len(),
                            s.tags.len()
                        )));
                    }
                }
            }
            Examples::Classification(_) => {}
        }
        if let Some(bad) = self.gold_labels().into_iter().find(|&l| l >= k) {
            return Err(Error::arg(format!("label index {bad} outside vocabulary of {k}")));
        }
        Ok(())
    }

    /// Deterministic holdout split at the sentence/document level: items are
    /// shuffled with `seed` and the last `round(test_fraction · n)` go to the test side.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(LabeledCorpus, LabeledCorpus)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::arg(format!("test fraction must be in [0, 1), got {test_fraction}")));
        }
        let n = self.num_items();
        let mut order: Vec<usize> = (0..n).collect();
        Rng::new(seed).shuffle(&mut order);
        let n_test = (test_fraction * n as f64).round() as usize;
        let (train_idx, test_idx) = order.split_at(n - n_test);
        let pick = |idx: &[usize]| -> LabeledCorpus {
            let examples = match &self.examples {
                Examples::Tagging(s) => Examples::Tagging(idx.iter().map(|&i| s[i].clone()).collect()),
                Examples::Classification(d) => {
                    Examples::Classification(idx.iter().map(|&i| d[i].clone()).collect())
                }
            };
            LabeledCorpus {
                label_vocab: self.label_vocab.clone(),
                examples,
            }
        };
        Ok((pick(train_idx), pick(test_idx)))
    }
}

/// Model-ready examples: one `[positions, dim]` input per labeled unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub inputs: Vec<Tensor<T>>,
    pub targets: Vec<usize>,
    pub labels: Vec<String>,
}

impl<T: Scalar> Dataset<T> {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset<T> {
        Dataset {
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            labels: self.labels.clone(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        Dataset {
            inputs: self.inputs.iter().map(Tensor::cast).collect(),
            targets: self.targets.clone(),
            labels: self.labels.clone(),
        }
    }
}
