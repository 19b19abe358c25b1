//! Ranking metrics for answer selection and corpus BLEU for generated questions.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Candidate indices by descending score; equal scores keep ascending index order.
pub fn rank_by_scores<S: Scalar>(scores: &[S]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Scores and binary relevance labels for one question's candidates.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedQuery<S> {
    scores: Vec<S>,
    labels: Vec<bool>,
}

impl<S: Scalar> RankedQuery<S> {
    pub fn new(scores: Vec<S>, labels: Vec<bool>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::InvalidArgument("query has no candidates".into()));
        }
        if scores.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if !labels.iter().any(|&l| l) {
            return Err(Error::InvalidArgument("query has no positive candidate".into()));
        }
        Ok(RankedQuery { scores, labels })
    }

    pub fn scores(&self) -> &[S] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    /// Labels in ranked order.
    fn ranked_labels(&self) -> impl Iterator<Item = bool> + '_ {
        rank_by_scores(&self.scores)
            .into_iter()
            .map(|i| self.labels[i])
    }

    pub fn average_precision(&self) -> S {
        let mut hits = 0usize;
        let mut total = S::zero();
        for (r, rel) in self.ranked_labels().enumerate() {
            if rel {
                hits += 1;
                total += lit::<S>(hits as f64) / lit((r + 1) as f64);
            }
        }
        total / lit(hits as f64)
    }

    pub fn reciprocal_rank(&self) -> S {
        let r = self
            .ranked_labels()
            .position(|rel| rel)
            .expect("validated: at least one positive");
        S::one() / lit((r + 1) as f64)
    }

    pub fn top_is_positive(&self) -> bool {
        self.ranked_labels().next().unwrap_or(false)
    }
}

fn mean_over<S: Scalar>(queries: &[RankedQuery<S>], f: impl Fn(&RankedQuery<S>) -> S) -> Result<S> {
    if queries.is_empty() {
        return Err(Error::InvalidArgument("no queries to evaluate".into()));
    }
    let total: S = queries.iter().map(f).sum();
    Ok(total / lit(queries.len() as f64))
}

pub fn mean_average_precision<S: Scalar>(queries: &[RankedQuery<S>]) -> Result<S> {
    mean_over(queries, RankedQuery::average_precision)
}

pub fn mean_reciprocal_rank<S: Scalar>(queries: &[RankedQuery<S>]) -> Result<S> {
    mean_over(queries, RankedQuery::reciprocal_rank)
}

pub fn precision_at_1<S: Scalar>(queries: &[RankedQuery<S>]) -> Result<S> {
    mean_over(queries, |q| if q.top_is_positive() { S::one() } else { S::zero() })
}

fn ngram_counts<T: AsRef<str>>(tokens: &[T], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts
                .entry(w.iter().map(AsRef::as_ref).collect())
                .or_default() += 1;
        }
    }
    counts
}

/// Corpus-level BLEU-4 with one reference per candidate and no smoothing.
///
/// Clipped n-gram matches and candidate n-gram totals are pooled over the corpus for
/// `n = 1..=4`; the score is their geometric mean times `exp(1 - r/c)` when the total candidate
/// length `c` is below the total reference length `r`. Any zero pooled precision gives 0.
pub fn bleu4<T: AsRef<str>>(candidates: &[Vec<T>], references: &[Vec<T>]) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(Error::InvalidArgument(format!(
            "{} candidates but {} references",
            candidates.len(),
            references.len()
        )));
    }
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    let (mut cand_len, mut ref_len) = (0usize, 0usize);
    for (c, r) in candidates.iter().zip(references) {
        cand_len += c.len();
        ref_len += r.len();
        for n in 1..=4 {
            let rc = ngram_counts(r, n);
            for (gram, count) in ngram_counts(c, n) {
                matched[n - 1] += count.min(rc.get(&gram).copied().unwrap_or(0));
                total[n - 1] += count;
            }
        }
    }
    if matched.contains(&0) {
        return Ok(0.0);
    }
    let log_mean = matched
        .iter()
        .zip(&total)
        .map(|(&m, &t)| (m as f64 / t as f64).ln())
        .sum::<f64>()
        / 4.0;
    let bp = if cand_len < ref_len {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    } else {
        1.0
    };
    Ok(bp * log_mean.exp())
}
