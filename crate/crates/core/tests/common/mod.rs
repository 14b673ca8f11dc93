#![allow(dead_code)]

use dpkit::metrics::ConfusionMatrix;

/// Sentiment classifier that predicts almost everything as negative.
pub fn sentiment_collapse() -> ConfusionMatrix {
    ConfusionMatrix::from_counts(
        vec!["Neg".into(), "Pos".into()],
        vec![vec![12497, 3], vec![12497, 2]],
    )
    .unwrap()
}

/// Private BiLSTM NER tagger at ε = 1 that almost only predicts the outside tag.
pub fn ner_bilstm_private() -> ConfusionMatrix {
    let labels = [
        "O", "I-LOC", "B-PER", "I-PER", "I-ORG", "I-MISC", "B-MISC", "B-LOC", "B-ORG",
    ];
    let counts = vec![
        vec![41021, 52, 9, 6, 9, 32, 4, 4, 5],
        vec![1935, 0, 1, 0, 0, 1, 0, 0, 1],
        vec![0, 0, 0, 0, 0, 0, 0, 0, 0],
        vec![2821, 2, 1, 0, 0, 3, 0, 0, 0],
        vec![2524, 3, 1, 1, 0, 2, 1, 0, 0],
        vec![1013, 1, 0, 0, 0, 1, 0, 0, 0],
        vec![9, 0, 0, 0, 0, 0, 0, 0, 0],
        vec![6, 0, 0, 0, 0, 0, 0, 0, 0],
        vec![5, 0, 0, 0, 0, 0, 0, 0, 0],
    ];
    ConfusionMatrix::from_counts(labels.iter().map(|s| s.to_string()).collect(), counts).unwrap()
}

/// Brute-force metrics: expands the matrix into individual (gold, predicted)
/// pairs and counts tp/fp/fn per class by scanning them.
pub struct OracleMetrics {
    pub accuracy: f64,
    pub per_class_f1: Vec<f64>,
    pub macro_f1: f64,
}

pub fn oracle_metrics(cm: &ConfusionMatrix) -> OracleMetrics {
    let k = cm.num_classes();
    let mut pairs = Vec::new();
    for g in 0..k {
        for p in 0..k {
            for _ in 0..cm.counts()[g][p] {
                pairs.push((g, p));
            }
        }
    }
    let correct = pairs.iter().filter(|(g, p)| g == p).count();
    let accuracy = if pairs.is_empty() {
        0.0
    } else {
        correct as f64 / pairs.len() as f64
    };
    let per_class_f1: Vec<f64> = (0..k)
        .map(|c| {
            let tp = pairs.iter().filter(|&&(g, p)| g == c && p == c).count() as u64;
            let fp = pairs.iter().filter(|&&(g, p)| g != c && p == c).count() as u64;
            let fneg = pairs.iter().filter(|&&(g, p)| g == c && p != c).count() as u64;
            let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
            let recall = if tp + fneg == 0 { 0.0 } else { tp as f64 / (tp + fneg) as f64 };
            if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            }
        })
        .collect();
    let macro_f1 = per_class_f1.iter().sum::<f64>() / k as f64;
    OracleMetrics {
        accuracy,
        per_class_f1,
        macro_f1,
    }
}

/// `ln A_α` by composite Simpson quadrature of
/// `∫ N(z; 0, σ²) ((1 − q) + q·exp((2z − 1)/(2σ²)))^α dz`.
pub fn quadrature_log_a(q: f64, sigma: f64, alpha: f64) -> f64 {
    let lo = -40.0 * sigma;
    let hi = 40.0 * sigma + alpha;
    let n = 400_000usize;
    let h = (hi - lo) / n as f64;
    let s2 = sigma * sigma;
    let f = |z: f64| {
        let log_pdf = -z * z / (2.0 * s2) - (2.0 * std::f64::consts::PI * s2).sqrt().ln();
        let mix = (1.0 - q) + q * ((2.0 * z - 1.0) / (2.0 * s2)).exp();
        (log_pdf + alpha * mix.ln()).exp()
    };
    let mut acc = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + i as f64 * h);
    }
    (acc * h / 3.0).ln()
}

pub fn quadrature_rdp(q: f64, sigma: f64, alpha: f64) -> f64 {
    quadrature_log_a(q, sigma, alpha) / (alpha - 1.0)
}
