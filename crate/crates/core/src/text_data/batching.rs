use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::QAPair;
use crate::error::{Error, Result};

/// Positive pairs and their sampled negatives; `negatives[i]` shares the question of `positives[i]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingBatch {
    pub positives: Vec<QAPair>,
    pub negatives: Vec<QAPair>,
}

impl TrainingBatch {
    pub fn len(&self) -> usize {
        self.positives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty()
    }
}

fn negative_for(positive: &QAPair, source: &QAPair) -> QAPair {
    QAPair {
        question_id: positive.question_id.clone(),
        question_tokens: positive.question_tokens.clone(),
        answer_tokens: source.answer_tokens.clone(),
        passage_id: source.passage_id.clone(),
        label: 0,
    }
}

/// One epoch of batches.
///
/// Positives are shuffled, grouped into pools of `pool_batches * batch_size`, each pool is
/// sorted by answer length and cut into batches. Each positive gets one negative whose answer
/// is drawn from a pool member of another passage, or from any other-passage row of `pairs`
/// when the pool has none.
pub fn make_batches(
    pairs: &[QAPair],
    batch_size: usize,
    pool_batches: usize,
    seed: u64,
) -> Result<Vec<TrainingBatch>> {
    if batch_size == 0 || pool_batches == 0 {
        return Err(Error::InvalidArgument("batch_size and pool_batches must be ≥ 1".into()));
    }
    let passages: HashSet<&str> = pairs.iter().map(|p| p.passage_id.as_str()).collect();
    if passages.len() < 2 {
        return Err(Error::NoCrossPassage);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positives: Vec<&QAPair> = pairs.iter().filter(|p| p.is_positive()).collect();
    positives.shuffle(&mut rng);

    let mut batches = Vec::new();
    for pool in positives.chunks(pool_batches * batch_size) {
        let mut pool = pool.to_vec();
        pool.sort_by_key(|p| p.answer_tokens.len());
        for chunk in pool.chunks(batch_size) {
            let mut negatives = Vec::with_capacity(chunk.len());
            for &pos in chunk {
                let local: Vec<&QAPair> = pool
                    .iter()
                    .copied()
                    .filter(|c| c.passage_id != pos.passage_id)
                    .collect();
                let source = if local.is_empty() {
                    let global: Vec<&QAPair> = pairs
                        .iter()
                        .filter(|c| c.passage_id != pos.passage_id)
                        .collect();
                    global[rng.gen_range(0..global.len())]
                } else {
                    local[rng.gen_range(0..local.len())]
                };
                negatives.push(negative_for(pos, source));
            }
            batches.push(TrainingBatch {
                positives: chunk.iter().map(|&p| p.clone()).collect(),
                negatives,
            });
        }
    }
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(i: usize, passage: usize, answer_len: usize) -> QAPair {
        QAPair::new(
            format!("q{i}"),
            vec![format!("question{i}")],
            (0..answer_len).map(|k| format!("a{i}_{k}")).collect(),
            format!("p{passage}"),
            1,
        )
        .unwrap()
    }

    fn corpus(n: usize, passages: usize) -> Vec<QAPair> {
        (0..n).map(|i| pair(i, i % passages, 1 + (i * 7) % 13)).collect()
    }

    #[test]
    fn default_pool_is_640() {
        let pairs = corpus(1500, 37);
        let batches = make_batches(&pairs, 64, 10, 1).unwrap();
        assert_eq!(batches.len(), 24);
        assert!(batches[..23].iter().all(|b| b.len() == 64));
        // The first ten batches form one sorted pool.
        let lens: Vec<usize> = batches[..10]
            .iter()
            .flat_map(|b| b.positives.iter().map(|p| p.answer_tokens.len()))
            .collect();
        assert_eq!(lens.len(), 640);
        assert!(lens.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn single_passage_is_rejected() {
        let pairs = corpus(10, 1);
        assert!(matches!(make_batches(&pairs, 4, 2, 0), Err(Error::NoCrossPassage)));
    }

    #[test]
    fn same_seed_same_stream() {
        let pairs = corpus(300, 5);
        assert_eq!(
            make_batches(&pairs, 16, 3, 42).unwrap(),
            make_batches(&pairs, 16, 3, 42).unwrap()
        );
        assert_ne!(
            make_batches(&pairs, 16, 3, 42).unwrap(),
            make_batches(&pairs, 16, 3, 43).unwrap()
        );
    }

    #[test]
    fn falls_back_to_full_dataset() {
        // One positive per pool, and the only other passage holds a label-0 row.
        let mut pairs = vec![pair(0, 0, 3)];
        let mut other = pair(1, 1, 2);
        other.label = 0;
        pairs.push(other.clone());
        let batches = make_batches(&pairs, 1, 1, 9).unwrap();
        assert_eq!(batches.len(), 1);
        assert_eq!(batches[0].negatives[0].answer_tokens, other.answer_tokens);
        assert_eq!(batches[0].negatives[0].passage_id, "p1");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn batch_invariants(n in 2usize..200, passages in 2usize..9, bs in 1usize..20, pool in 1usize..5, seed in 0u64..1000) {
            let pairs = corpus(n, passages);
            let batches = make_batches(&pairs, bs, pool, seed).unwrap();
            let mut seen: Vec<&QAPair> = Vec::new();
            for b in &batches {
                prop_assert_eq!(b.positives.len(), b.negatives.len());
                prop_assert!(b.len() <= bs && !b.is_empty());
                for (p, q) in b.positives.iter().zip(&b.negatives) {
                    prop_assert_ne!(&p.passage_id, &q.passage_id);
                    prop_assert_eq!(&p.question_tokens, &q.question_tokens);
                    prop_assert_eq!(q.label, 0);
                }
                seen.extend(b.positives.iter());
            }
            // Epoch coverage: every positive exactly once.
            let mut got: Vec<&str> = seen.iter().map(|p| p.question_id.as_str()).collect();
            let mut want: Vec<&str> = pairs.iter().map(|p| p.question_id.as_str()).collect();
            got.sort_unstable();
            want.sort_unstable();
            prop_assert_eq!(got, want);
            // Answer lengths never decrease within a pool.
            for pool_batches in batches.chunks(pool) {
                let lens: Vec<usize> = pool_batches.iter().flat_map(|b| b.positives.iter().map(|p| p.answer_tokens.len())).collect();
                prop_assert!(lens.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }
}
