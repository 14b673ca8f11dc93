//! Parameter-free featurization: the frozen stand-in for a pretrained encoder.
//!
//! Tokens are hashed with 64-bit FNV-1a into `dim` buckets. FNV's low bits
//! are weakly mixed for near-identical keys, so the high half is xor-folded
//! in before reduction.
//!
//! The model mean-pools over positions, which would make a window an
//! unordered bag: the focus token and its neighbour would see the same input.
//! Window tokens are therefore hashed together with their offset from the
//! focus position (`"-1\u{1f}word"`), so position survives the pooling. Window features
//! give each of the `2w+1` neighbourhood positions its own one-hot row; positions
//! beyond a sentence edge use the pad vector, which is all zeros.

use crate::error::{Error, Result};
use crate::model::Featurizer;
use crate::tensor::Tensor;

use super::{Dataset, Document, Examples, LabeledCorpus, Sentence};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

fn offset_bucket(offset: isize, token: &str, dim: usize) -> usize {
    bucket(&format!("{offset}\u{1f}{token}"), dim)
}

pub fn bucket(token: &str, dim: usize) -> usize {
    let h = fnv1a64(token.as_bytes());
    ((h ^ (h >> 32)) % dim as u64) as usize
}

/// One input tensor of shape `[featurizer.positions(), featurizer.dim()]` per
/// labeled unit (token for tagging, document for classification).
pub fn featurize(corpus: &LabeledCorpus, featurizer: &Featurizer) -> Result<Dataset<f64>> {
    corpus.validate()?;
    let dim = featurizer.dim();
    if dim == 0 {
        return Err(Error::arg("featurizer dimension must be positive"));
    }
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    match &corpus.examples {
        Examples::Tagging(sentences) => {
            for s in sentences {
                for (i, &tag) in s.tags.iter().enumerate() {
                    inputs.push(token_input(s, i, featurizer)?);
                    targets.push(tag);
                }
            }
        }
        Examples::Classification(docs) => {
            for d in docs {
                inputs.push(document_input(d, featurizer)?);
                targets.push(d.label);
            }
        }
    }
    Ok(Dataset {
        inputs,
        targets,
        labels: corpus.label_vocab.clone(),
    })
}

fn token_input(s: &Sentence, i: usize, featurizer: &Featurizer) -> Result<Tensor<f64>> {
    match *featurizer {
        Featurizer::HashedBagOfWords { dim } => {
            let mut data = vec![0.0; dim];
            data[bucket(&s.tokens[i].text, dim)] = 1.0;
            Tensor::from_vec(&[1, dim], data)
        }
        Featurizer::WindowFeatures { window, dim } => {
            let positions = 2 * window + 1;
            let mut data = vec![0.0; positions * dim];
            for p in 0..positions {
                let Some(j) = (i + p).checked_sub(window) else { continue };
                if let Some(tok) = s.tokens.get(j) {
                    data[p * dim + offset_bucket(p as isize - window as isize, &tok.text, dim)] = 1.0;
                }
            }
            Tensor::from_vec(&[positions, dim], data)
        }
        Featurizer::Dense { dim } => {
            let cols = &s.tokens[i].columns;
            if cols.len() != dim {
                return Err(Error::Shape {
                    expected: vec![dim],
                    actual: vec![cols.len()],
                });
            }
            let data = cols
                .iter()
                .map(|c| {
                    c.parse::<f64>()
                        .map_err(|_| Error::arg(format!("token column {c:?} is not numeric")))
                })
                .collect::<Result<Vec<_>>>()?;
            Tensor::from_vec(&[1, dim], data)
        }
    }
}

fn document_input(d: &Document, featurizer: &Featurizer) -> Result<Tensor<f64>> {
    match *featurizer {
        Featurizer::HashedBagOfWords { dim } => {
            let mut data = vec![0.0; dim];
            for t in &d.tokens {
                data[bucket(t, dim)] += 1.0;
            }
            Tensor::from_vec(&[1, dim], data)
        }
        Featurizer::WindowFeatures { window, dim } => {
            // Documents have no focus token: the window covers the first 2w+1 tokens.
            let positions = 2 * window + 1;
            let mut data = vec![0.0; positions * dim];
            for (p, t) in d.tokens.iter().take(positions).enumerate() {
                data[p * dim + offset_bucket(p as isize, t, dim)] = 1.0;
            }
            Tensor::from_vec(&[positions, dim], data)
        }
        Featurizer::Dense { dim } => {
            if d.features.len() != dim {
                return Err(Error::Shape {
                    expected: vec![dim],
                    actual: vec![d.features.len()],
                });
            }
            Tensor::from_vec(&[1, dim], d.features.clone())
        }
    }
}
