//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use dualqa::bigram_lm::BigramLm;
use dualqa::dual_trainer::PreparedBatch;
use dualqa::model::DualModel;
use dualqa::nn::ModelDims;
use dualqa::text_data::{build_vocab, tokenize, QAPair, TrainingBatch};

pub fn words(s: &str) -> Vec<String> {
    tokenize(s).expect("tokenizable")
}

pub const QUESTIONS: [&str; 4] = ["who wrote it ?", "where is rome ?", "what year ?", "who is he ?"];
pub const ANSWERS: [&str; 4] = ["tolkien wrote it", "rome is italy", "in 1954 .", "he is bob"];

/// Model over the fixed four-pair vocabulary with every size set to `hidden`.
pub fn tiny_model(hidden: usize, seed: u64) -> DualModel<f64> {
    let qs: Vec<Vec<String>> = QUESTIONS.iter().map(|s| words(s)).collect();
    let ans: Vec<Vec<String>> = ANSWERS.iter().map(|s| words(s)).collect();
    let dims = ModelDims::tiny(hidden);
    DualModel::new(
        dims,
        build_vocab(&qs, dims.vocab_size).unwrap(),
        build_vocab(&ans, dims.vocab_size).unwrap(),
        seed,
    )
    .unwrap()
}

/// Two positives with negatives taken from the other two answers.
pub fn tiny_batch() -> TrainingBatch {
    let pair = |q: usize, a: usize, label: u8| {
        QAPair::new(format!("q{q}"), words(QUESTIONS[q]), words(ANSWERS[a]), format!("p{a}"), label).unwrap()
    };
    TrainingBatch {
        positives: vec![pair(0, 0, 1), pair(1, 1, 1)],
        negatives: vec![pair(0, 2, 0), pair(1, 3, 0)],
    }
}

pub fn tiny_lms() -> (BigramLm<f64>, BigramLm<f64>) {
    let qs: Vec<Vec<String>> = QUESTIONS.iter().map(|s| words(s)).collect();
    let ans: Vec<Vec<String>> = ANSWERS.iter().map(|s| words(s)).collect();
    (BigramLm::fit(&qs, 1.0).unwrap(), BigramLm::fit(&ans, 1.0).unwrap())
}

pub fn tiny_prepared(model: &DualModel<f64>) -> PreparedBatch<f64> {
    let (qlm, alm) = tiny_lms();
    PreparedBatch::new(model, &tiny_batch(), &qlm, &alm).unwrap()
}

/// Brute-force ranking: the 1-based rank of candidate `i` counts every candidate that scores
/// higher, or equal with a smaller index.
pub fn oracle_ranks(scores: &[f64]) -> Vec<usize> {
    (0..scores.len())
        .map(|i| {
            1 + (0..scores.len())
                .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
                .count()
        })
        .collect()
}

/// Labels listed by rank.
fn oracle_ranked_labels(scores: &[f64], labels: &[bool]) -> Vec<bool> {
    let ranks = oracle_ranks(scores);
    (1..=scores.len())
        .map(|r| labels[ranks.iter().position(|&x| x == r).unwrap()])
        .collect()
}

pub fn oracle_average_precision(scores: &[f64], labels: &[bool]) -> f64 {
    let mut hits = 0.0;
    let mut total = 0.0;
    for (k, &rel) in oracle_ranked_labels(scores, labels).iter().enumerate() {
        if rel {
            hits += 1.0;
            total += hits / (k + 1) as f64;
        }
    }
    total / hits
}

pub fn oracle_reciprocal_rank(scores: &[f64], labels: &[bool]) -> f64 {
    let ranked = oracle_ranked_labels(scores, labels);
    let mut k = 0;
    while !ranked[k] {
        k += 1;
    }
    1.0 / (k + 1) as f64
}

pub fn oracle_top_is_positive(scores: &[f64], labels: &[bool]) -> f64 {
    if oracle_ranked_labels(scores, labels)[0] {
        1.0
    } else {
        0.0
    }
}

pub fn oracle_mean(values: &[f64]) -> f64 {
    let mut total = 0.0;
    for v in values {
        total += v;
    }
    total / values.len() as f64
}

/// Scalar AdaDelta written straight from the recurrences; returns the applied `lr·Δ` per step.
pub fn oracle_adadelta(grads: &[f64], rho: f64, eps: f64, lr: f64) -> Vec<f64> {
    let (mut eg2, mut edx2) = (0.0, 0.0);
    grads
        .iter()
        .map(|&g| {
            eg2 = rho * eg2 + (1.0 - rho) * g * g;
            let rms_dx = (edx2 + eps).sqrt();
            let rms_g = (eg2 + eps).sqrt();
            let dx = -(rms_dx / rms_g) * g;
            edx2 = rho * edx2 + (1.0 - rho) * dx * dx;
            lr * dx
        })
        .collect()
}
