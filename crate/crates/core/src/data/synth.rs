//! Synthetic corpora with controlled class skew.
//!
//! Each class `k` gets a unit-variance Gaussian cluster centred at
//! `(d/√2)·e_k`, so every pair of class means sits at distance `d` (the
//! separation). Labels are drawn i.i.d. from the class probabilities.
//! Tagging corpora carry the feature vector in the middle CoNLL columns,
//! which keeps them serializable and lets the `Dense` featurizer read them back.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

use super::{Document, Examples, LabeledCorpus, Sentence, Token};

pub const DEFAULT_SEPARATION: f64 = 2.0;

/// CoNLL'03 English training-split tag counts. The published test column
/// contains anomalies (e.g. a zero B-PER count), so only the train column is used.
pub const CONLL_TRAIN_TAG_COUNTS: [(&str, u64); 9] = [
    ("O", 170_524),
    ("B-PER", 6_600),
    ("I-PER", 4_528),
    ("B-ORG", 6_321),
    ("I-ORG", 3_704),
    ("B-LOC", 7_140),
    ("I-LOC", 1_157),
    ("B-MISC", 3_438),
    ("I-MISC", 1_155),
];

/// Separation used by the `conll_like` preset. Rare tags make up well under
/// 1% of tokens each, so the default `d = 2` leaves them below chance even
/// for a non-private model; at this distance they are recoverable.
pub const CONLL_LIKE_SEPARATION: f64 = 6.0;

const SENTENCE_LENGTH: usize = 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewSpec {
    pub labels: Vec<String>,
    pub class_probabilities: Vec<f64>,
    /// Number of tokens (tagging) or documents (classification).
    pub size: usize,
    pub seed: u64,
    #[serde(default = "default_separation")]
    pub separation: f64,
}

fn default_separation() -> f64 {
    DEFAULT_SEPARATION
}

impl SkewSpec {
    pub fn new(labels: Vec<String>, class_probabilities: Vec<f64>, size: usize, seed: u64) -> Result<Self> {
        let spec = SkewSpec {
            labels,
            class_probabilities,
            size,
            seed,
            separation: DEFAULT_SEPARATION,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn uniform(classes: usize, size: usize, seed: u64) -> Result<Self> {
        if classes == 0 {
            return Err(Error::arg("need at least one class"));
        }
        let labels = (0..classes).map(|k| format!("c{k}")).collect();
        SkewSpec::new(labels, vec![1.0 / classes as f64; classes], size, seed)
    }

    /// Tag proportions of the CoNLL'03 training split.
    pub fn conll_like(size: usize, seed: u64) -> Self {
        let total: u64 = CONLL_TRAIN_TAG_COUNTS.iter().map(|(_, c)| c).sum();
        SkewSpec {
            labels: CONLL_TRAIN_TAG_COUNTS.iter().map(|(l, _)| l.to_string()).collect(),
            class_probabilities: CONLL_TRAIN_TAG_COUNTS
                .iter()
                .map(|&(_, c)| c as f64 / total as f64)
                .collect(),
            size,
            seed,
            separation: CONLL_LIKE_SEPARATION,
        }
    }

    pub fn with_separation(mut self, separation: f64) -> Self {
        self.separation = separation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.class_probabilities;
        if p.is_empty() || p.len() != self.labels.len() {
            return Err(Error::arg(format!(
                "{} probabilities for {} labels",
                p.len(),
                self.labels.len()
            )));
        }
        if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::arg("class probabilities must be finite and non-negative"));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::arg(format!("class probabilities sum to {sum}, not 1")));
        }
        if !(self.separation >= 0.0) || !self.separation.is_finite() {
            return Err(Error::arg(format!("separation must be finite and >= 0, got {}", self.separation)));
        }
        Ok(())
    }

    fn check_dim(&self, feature_dim: usize) -> Result<()> {
        if feature_dim < self.labels.len() {
            return Err(Error::arg(format!(
                "feature_dim {feature_dim} cannot hold {} class means",
                self.labels.len()
            )));
        }
        Ok(())
    }
}

fn draw(spec: &SkewSpec, feature_dim: usize, rng: &mut Rng) -> (usize, Vec<f64>) {
    let label = rng.categorical(&spec.class_probabilities);
    let offset = spec.separation / std::f64::consts::SQRT_2;
    let features = (0..feature_dim)
        .map(|j| rng.standard_normal() + if j == label { offset } else { 0.0 })
        .collect();
    (label, features)
}

/// A tagging corpus of `spec.size` tokens in fixed-length sentences (the last may be shorter).
pub fn gen_skewed_tagging(spec: &SkewSpec, feature_dim: usize) -> Result<LabeledCorpus> {
    spec.validate()?;
    spec.check_dim(feature_dim)?;
    let mut rng = Rng::new(spec.seed);
    let mut sentences = Vec::with_capacity(spec.size.div_ceil(SENTENCE_LENGTH));
    let mut current = Sentence {
        tokens: Vec::new(),
        tags: Vec::new(),
    };
    for i in 0..spec.size {
        let (label, features) = draw(spec, feature_dim, &mut rng);
        current.tokens.push(Token {
            text: format!("w{i}"),
            columns: features.iter().map(|x| x.to_string()).collect(),
        });
        current.tags.push(label);
        if current.tokens.len() == SENTENCE_LENGTH {
            sentences.push(std::mem::replace(
                &mut current,
                Sentence {
                    tokens: Vec::new(),
                    tags: Vec::new(),
                },
            ));
        }
    }
    if !current.tokens.is_empty() {
        sentences.push(current);
    }
    Ok(LabeledCorpus {
        label_vocab: spec.labels.clone(),
        examples: Examples::Tagging(sentences),
    })
}

/// A classification corpus of `spec.size` numeric-feature documents.
pub fn gen_skewed_classification(spec: &SkewSpec, feature_dim: usize) -> Result<LabeledCorpus> {
    spec.validate()?;
    spec.check_dim(feature_dim)?;
    let mut rng = Rng::new(spec.seed);
    let docs = (0..spec.size)
        .map(|_| {
            let (label, features) = draw(spec, feature_dim, &mut rng);
            Document {
                tokens: Vec::new(),
                features,
                label,
            }
        })
        .collect();
    Ok(LabeledCorpus {
        label_vocab: spec.labels.clone(),
        examples: Examples::Classification(docs),
    })
}

/// Balanced classification with the given separation, the learnable baseline task.
pub fn balanced_classification(
    classes: usize,
    size: usize,
    feature_dim: usize,
    separation: f64,
    seed: u64,
) -> Result<LabeledCorpus> {
    let spec = SkewSpec::uniform(classes, size, seed)?.with_separation(separation);
    gen_skewed_classification(&spec, feature_dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probabilities_must_sum_to_one() {
        assert!(SkewSpec::new(vec!["a".into(), "b".into()], vec![0.5, 0.6], 10, 0).is_err());
        assert!(SkewSpec::new(vec!["a".into(), "b".into()], vec![1.5, -0.5], 10, 0).is_err());
        assert!(SkewSpec::new(vec!["a".into()], vec![1.0], 10, 0).is_ok());
    }

    #[test]
    fn conll_preset_is_a_simplex() {
        let s = SkewSpec::conll_like(10, 0);
        s.validate().unwrap();
        assert!((s.class_probabilities[0] - 170_524.0 / 204_567.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_spec_is_single_class() {
        let spec = SkewSpec::new(vec!["a".into(), "b".into()], vec![1.0, 0.0], 500, 3).unwrap();
        let c = gen_skewed_tagging(&spec, 2).unwrap();
        assert_eq!(c.label_counts(), vec![500, 0]);
    }

    #[test]
    fn dim_must_hold_means() {
        let spec = SkewSpec::uniform(4, 10, 0).unwrap();
        assert!(gen_skewed_classification(&spec, 3).is_err());
    }

    #[test]
    fn tagging_sizes() {
        let spec = SkewSpec::uniform(3, 100, 1).unwrap();
        let c = gen_skewed_tagging(&spec, 3).unwrap();
        assert_eq!(c.num_labels(), 100);
        assert_eq!(c.num_items(), 100usize.div_ceil(SENTENCE_LENGTH));
        c.validate().unwrap();
    }
}
