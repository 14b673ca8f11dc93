//! CoNLL-style column files.
//!
//! Whitespace-separated columns, token first and tag last, one token per
//! line. One or more blank lines end a sentence; `-DOCSTART-` lines are
//! skipped. Every line of a sentence must have the same number of columns.

use std::collections::HashMap;
use std::io::BufRead;

use crate::error::{Error, Result};

use super::{Examples, LabeledCorpus, Sentence, Token};

pub fn parse_conll<R: BufRead>(reader: R) -> Result<LabeledCorpus> {
    parse(reader, None)
}

pub fn parse_conll_str(text: &str) -> Result<LabeledCorpus> {
    parse(text.as_bytes(), None)
}

/// Parses against a fixed label vocabulary; unknown tags are errors.
pub fn parse_conll_with_labels<R: BufRead>(reader: R, labels: &[String]) -> Result<LabeledCorpus> {
    parse(reader, Some(labels))
}

fn parse<R: BufRead>(reader: R, fixed: Option<&[String]>) -> Result<LabeledCorpus> {
    let mut vocab: Vec<String> = fixed.map(<[String]>::to_vec).unwrap_or_default();
    let mut index: HashMap<String, usize> =
        vocab.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
    let mut sentences = Vec::new();
    let mut current = Sentence {
        tokens: Vec::new(),
        tags: Vec::new(),
    };
    let mut width = 0usize;

    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            if !current.tokens.is_empty() {
                sentences.push(std::mem::replace(
                    &mut current,
                    Sentence {
                        tokens: Vec::new(),
                        tags: Vec::new(),
                    },
                ));
            }
            continue;
        }
        if trimmed.starts_with("-DOCSTART-") {
            continue;
        }
        let cols: Vec<&str> = trimmed.split_whitespace().collect();
        if cols.len() < 2 {
            return Err(Error::Parse {
                line: lineno,
                message: "expected at least a token and a tag".into(),
            });
        }
        if current.tokens.is_empty() {
            width = cols.len();
        } else if cols.len() != width {
            return Err(Error::Parse {
                line: lineno,
                message: format!("{} columns, sentence started with {width}", cols.len()),
            });
        }
        let tag = cols[cols.len() - 1];
        let id = match index.get(tag) {
            Some(&id) => id,
            None if fixed.is_some() => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("unknown tag {tag:?}"),
                })
            }
            None => {
                vocab.push(tag.to_string());
                index.insert(tag.to_string(), vocab.len() - 1);
                vocab.len() - 1
            }
        };
        current.tokens.push(Token {
            text: cols[0].to_string(),
            columns: cols[1..cols.len() - 1].iter().map(|s| s.to_string()).collect(),
        });
        current.tags.push(id);
    }
    if !current.tokens.is_empty() {
        sentences.push(current);
    }
    Ok(LabeledCorpus {
        label_vocab: vocab,
        examples: Examples::Tagging(sentences),
    })
}

/// Writes a tagging corpus back out: single-space separated columns, one
/// blank line after each sentence.
pub fn serialize_conll(corpus: &LabeledCorpus) -> Result<String> {
    let Examples::Tagging(sentences) = &corpus.examples else {
        return Err(Error::arg("only tagging corpora serialize to CoNLL"));
    };
    let mut out = String::new();
    for s in sentences {
        for (tok, &tag) in s.tokens.iter().zip(&s.tags) {
            out.push_str(&tok.text);
            for c in &tok.columns {
                out.push(' ');
                out.push_str(c);
            }
            out.push(' ');
            out.push_str(&corpus.label_vocab[tag]);
            out.push('\n');
        }
        out.push('\n');
    }
    Ok(out)
}
