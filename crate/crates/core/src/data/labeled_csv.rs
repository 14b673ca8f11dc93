//! Labeled CSV: a header row, feature columns, and the label in the last column.
//!
//! A feature column whose every value parses as a number becomes a numeric
//! feature; any other column is treated as text and split on whitespace into
//! tokens for hashed featurization.

use std::collections::HashMap;
use std::io::Read;

use crate::error::{Error, Result};

use super::{Document, Examples, LabeledCorpus};

pub fn parse_labeled_csv<R: Read>(reader: R) -> Result<LabeledCorpus> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            message: "need at least one feature column and a label column".into(),
        });
    }
    let label_col = header.len() - 1;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?);
    }
    let numeric: Vec<bool> = (0..label_col)
        .map(|c| !rows.is_empty() && rows.iter().all(|r| r[c].trim().parse::<f64>().is_ok()))
        .collect();

    let mut vocab = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut docs = Vec::with_capacity(rows.len());
    for r in &rows {
        let raw = r[label_col].trim();
        let label = *index.entry(raw.to_string()).or_insert_with(|| {
            vocab.push(raw.to_string());
            vocab.len() - 1
        });
        let mut doc = Document {
            tokens: Vec::new(),
            features: Vec::new(),
            label,
        };
        for (c, &is_num) in numeric.iter().enumerate() {
            if is_num {
                doc.features.push(r[c].trim().parse().expect("checked numeric"));
            } else {
                doc.tokens.extend(r[c].split_whitespace().map(str::to_string));
            }
        }
        docs.push(doc);
    }
    Ok(LabeledCorpus {
        label_vocab: vocab,
        examples: Examples::Classification(docs),
    })
}

/// Writes `f0..f{n-1}` numeric columns, a `text` column when any document
/// has tokens, and a final `label` column.
pub fn serialize_labeled_csv(corpus: &LabeledCorpus) -> Result<String> {
    let Examples::Classification(docs) = &corpus.examples else {
        return Err(Error::arg("only classification corpora serialize to labeled CSV"));
    };
    let width = docs.first().map_or(0, |d| d.features.len());
    if docs.iter().any(|d| d.features.len() != width) {
        return Err(Error::arg("documents have differing feature widths"));
    }
    let has_text = docs.iter().any(|d| !d.tokens.is_empty());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (0..width).map(|j| format!("f{j}")).collect();
    if has_text {
        header.push("text".into());
    }
    header.push("label".into());
    w.write_record(&header)?;
    for d in docs {
        let mut row: Vec<String> = d.features.iter().map(|x| x.to_string()).collect();
        if has_text {
            row.push(d.tokens.join(" "));
        }
        row.push(corpus.label_vocab[d.label].clone());
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
