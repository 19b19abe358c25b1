//! Add-α smoothed bigram language model over raw tokens.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

pub const SENTENCE_START: &str = "<s>";
pub const SENTENCE_END: &str = "</s>";

/// Bigram counts over sentences wrapped as `<s> w1 … wn </s>`.
///
/// `P(w | h) = (count(h, w) + α) / (count(h) + α·|V|)` where `V` is the set of observed word
/// types plus `</s>`.
#[derive(Clone, Debug, PartialEq)]
pub struct BigramLm<S> {
    alpha: S,
    /// Observed types plus `</s>`, sorted.
    vocab: Vec<String>,
    context_counts: HashMap<String, u64>,
    bigram_counts: HashMap<(String, String), u64>,
}

/// Raw counts in a canonical order, for serialization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BigramCounts {
    pub vocab: Vec<String>,
    pub contexts: Vec<(String, u64)>,
    pub bigrams: Vec<(String, String, u64)>,
}

impl<S: Scalar> BigramLm<S> {
    pub fn fit<T: AsRef<str>>(corpus: &[Vec<T>], alpha: S) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::InvalidArgument("language model corpus is empty".into()));
        }
        if !(alpha > S::zero()) || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("smoothing alpha must be > 0, got {alpha}")));
        }
        let mut context_counts: HashMap<String, u64> = HashMap::new();
        let mut bigram_counts: HashMap<(String, String), u64> = HashMap::new();
        let mut types: Vec<String> = vec![SENTENCE_END.to_string()];
        for sentence in corpus {
            let mut prev = SENTENCE_START.to_string();
            for w in sentence.iter().map(|w| w.as_ref()).chain([SENTENCE_END]) {
                *context_counts.entry(prev.clone()).or_default() += 1;
                *bigram_counts.entry((prev, w.to_string())).or_default() += 1;
                prev = w.to_string();
            }
            types.extend(sentence.iter().map(|w| w.as_ref().to_string()));
        }
        types.sort_unstable();
        types.dedup();
        Ok(BigramLm {
            alpha,
            vocab: types,
            context_counts,
            bigram_counts,
        })
    }

    pub fn from_counts(counts: BigramCounts, alpha: S) -> Result<Self> {
        if !(alpha > S::zero()) {
            return Err(Error::InvalidArgument("smoothing alpha must be > 0".into()));
        }
        let lm = BigramLm {
            alpha,
            vocab: counts.vocab,
            context_counts: counts.contexts.into_iter().collect(),
            bigram_counts: counts
                .bigrams
                .into_iter()
                .map(|(h, w, c)| ((h, w), c))
                .collect(),
        };
        let mut sums: HashMap<&str, u64> = HashMap::new();
        for ((h, _), c) in &lm.bigram_counts {
            *sums.entry(h.as_str()).or_default() += c;
        }
        for (h, c) in &lm.context_counts {
            if sums.get(h.as_str()).copied().unwrap_or(0) != *c {
                return Err(Error::Checkpoint(format!("bigram counts for context {h:?} do not sum")));
            }
        }
        Ok(lm)
    }

    pub fn counts(&self) -> BigramCounts {
        let contexts: BTreeMap<&String, u64> =
            self.context_counts.iter().map(|(k, &v)| (k, v)).collect();
        let bigrams: BTreeMap<&(String, String), u64> =
            self.bigram_counts.iter().map(|(k, &v)| (k, v)).collect();
        BigramCounts {
            vocab: self.vocab.clone(),
            contexts: contexts.into_iter().map(|(k, v)| (k.clone(), v)).collect(),
            bigrams: bigrams
                .into_iter()
                .map(|((h, w), v)| (h.clone(), w.clone(), v))
                .collect(),
        }
    }

    pub fn alpha(&self) -> S {
        self.alpha
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn context_count(&self, h: &str) -> u64 {
        self.context_counts.get(h).copied().unwrap_or(0)
    }

    pub fn bigram_count(&self, h: &str, w: &str) -> u64 {
        self.bigram_counts
            .get(&(h.to_string(), w.to_string()))
            .copied()
            .unwrap_or(0)
    }

    pub fn conditional(&self, h: &str, w: &str) -> S {
        let v: S = lit(self.vocab.len() as f64);
        let num = lit::<S>(self.bigram_count(h, w) as f64) + self.alpha;
        let den = lit::<S>(self.context_count(h) as f64) + self.alpha * v;
        num / den
    }

    /// `Σ_t ln P(w_t | w_{t-1})` over the wrapped sentence, including the `</s>` transition.
    pub fn sentence_log_prob<T: AsRef<str>>(&self, tokens: &[T]) -> Result<S> {
        if tokens.is_empty() {
            return Err(Error::EmptySequence);
        }
        let mut prev = SENTENCE_START;
        let mut total = S::zero();
        for w in tokens.iter().map(|t| t.as_ref()).chain([SENTENCE_END]) {
            total += self.conditional(prev, w).ln();
            prev = w;
        }
        Ok(total)
    }

    /// Smoothed `P(· | context)` in [`BigramLm::vocab`] order.
    pub fn next_word_distribution(&self, context: &str) -> Vec<S> {
        self.vocab
            .iter()
            .map(|w| self.conditional(context, w))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ab() -> Vec<Vec<&'static str>> {
        vec![vec!["a", "b"], vec!["a", "b"]]
    }

    #[test]
    fn counts_wrapped_sentences() {
        let lm = BigramLm::<f64>::fit(&ab(), 1.0).unwrap();
        assert_eq!(lm.bigram_count("<s>", "a"), 2);
        assert_eq!(lm.bigram_count("a", "b"), 2);
        assert_eq!(lm.bigram_count("b", "</s>"), 2);
        assert_eq!(lm.vocab(), ["</s>", "a", "b"]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(BigramLm::<f64>::fit(&ab(), 0.0).is_err());
        assert!(BigramLm::<f64>::fit::<&str>(&[], 1.0).is_err());
        let lm = BigramLm::<f64>::fit(&ab(), 1.0).unwrap();
        assert!(lm.sentence_log_prob::<&str>(&[]).is_err());
    }

    #[test]
    fn hand_counted_sentence() {
        // Every transition: (2 + 1) / (2 + 3) = 3/5.
        let lm = BigramLm::<f64>::fit(&ab(), 1.0).unwrap();
        let lp = lm.sentence_log_prob(&["a", "b"]).unwrap();
        assert!((lp - 3.0 * (0.6f64).ln()).abs() < 1e-12);
        assert!((lp - (-1.5325)).abs() < 1e-4);
    }

    #[test]
    fn hand_counted_distribution() {
        let lm = BigramLm::<f64>::fit(&ab(), 1.0).unwrap();
        let d = lm.next_word_distribution("a");
        // vocab order: </s>, a, b
        assert!((d[0] - 0.2).abs() < 1e-15);
        assert!((d[1] - 0.2).abs() < 1e-15);
        assert!((d[2] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn unseen_context_is_uniform() {
        let lm = BigramLm::<f64>::fit(&ab(), 1.0).unwrap();
        for p in lm.next_word_distribution("zebra") {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let lp = lm.sentence_log_prob(&["zebra"]).unwrap();
        assert!(lp < 0.0);
    }

    #[test]
    fn alpha_monotonicity_for_unseen_bigram() {
        let mut prev = 0.0;
        for alpha in [0.01, 0.1, 0.5, 1.0, 2.0, 10.0] {
            let lm = BigramLm::<f64>::fit(&ab(), alpha).unwrap();
            let p = lm.conditional("a", "a");
            assert!(p > prev);
            prev = p;
        }
    }

    #[test]
    fn counts_round_trip() {
        let lm = BigramLm::<f64>::fit(&ab(), 0.5).unwrap();
        let back = BigramLm::from_counts(lm.counts(), 0.5).unwrap();
        assert_eq!(back, lm);
    }

    proptest! {
        #[test]
        fn every_context_normalizes(
            corpus in proptest::collection::vec(proptest::collection::vec("[a-e]", 1..6), 1..10),
            alpha in 0.01f64..5.0,
            ctx in "[a-g]|<s>",
        ) {
            let lm = BigramLm::<f64>::fit(&corpus, alpha).unwrap();
            let total: f64 = lm.next_word_distribution(&ctx).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            for (h, c) in lm.counts().contexts {
                let s: u64 = lm.counts().bigrams.iter().filter(|b| b.0 == h).map(|b| b.2).sum();
                prop_assert_eq!(s, c);
            }
        }
    }
}
