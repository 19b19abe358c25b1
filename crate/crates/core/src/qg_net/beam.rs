use std::cmp::Ordering;

use super::QgNet;
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::text_data::{Vocabulary, EOS, SOS, UNK};

/// A (possibly partial) decoded question.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamHypothesis<S> {
    /// Emitted ids, not including SOS. Ends with EOS when `finished` by the model.
    pub tokens: Vec<usize>,
    pub log_prob: S,
    /// Attention over answer positions for each emitted token.
    pub attention_rows: Vec<Vec<S>>,
    pub finished: bool,
}

struct Live<S> {
    hyp: BeamHypothesis<S>,
    state: Var,
    history: Var,
}

struct Candidate<S> {
    total: S,
    step: S,
    parent: usize,
    token: Option<usize>,
}

fn desc<S: Scalar>(a: S, b: S) -> Ordering {
    b.partial_cmp(&a).unwrap_or(Ordering::Equal)
}

/// Beam search on cumulative log-probability without length normalization.
///
/// Finished hypotheses stay in the beam and compete with extensions of the live ones.
/// Ties are broken by step log-probability, then beam position, then token id, so `k = 1`
/// reproduces [`greedy_decode`].
pub fn beam_search<S: Scalar>(
    net: &QgNet,
    g: &mut Graph<'_, S>,
    answer: &[usize],
    k: usize,
    max_len: usize,
) -> Result<Vec<BeamHypothesis<S>>> {
    if k == 0 || max_len == 0 {
        return Err(Error::InvalidArgument("beam size and max_len must be ≥ 1".into()));
    }
    let enc = net.encode_answer(g, answer)?;
    let history = net.initial_history(g);
    let mut beam = vec![Live {
        hyp: BeamHypothesis {
            tokens: Vec::new(),
            log_prob: S::zero(),
            attention_rows: Vec::new(),
            finished: false,
        },
        state: enc.init,
        history,
    }];
    let mut steps = Vec::new();

    while beam.iter().any(|l| !l.hyp.finished) {
        steps.clear();
        let mut cands: Vec<Candidate<S>> = Vec::new();
        for (i, live) in beam.iter().enumerate() {
            if live.hyp.finished {
                steps.push(None);
                cands.push(Candidate {
                    total: live.hyp.log_prob,
                    step: S::zero(),
                    parent: i,
                    token: None,
                });
                continue;
            }
            let prev = live.hyp.tokens.last().copied().unwrap_or(SOS);
            let step = net.decode_step(g, &enc, prev, live.state, live.history)?;
            let lp = g.log_softmax(step.logits);
            let lps = g.value(lp).data();
            let mut order: Vec<usize> = (0..lps.len()).collect();
            order.sort_by(|&a, &b| desc(lps[a], lps[b]).then(a.cmp(&b)));
            for &t in order.iter().take(k) {
                cands.push(Candidate {
                    total: live.hyp.log_prob + lps[t],
                    step: lps[t],
                    parent: i,
                    token: Some(t),
                });
            }
            steps.push(Some(step));
        }
        cands.sort_by(|a, b| {
            desc(a.total, b.total)
                .then(desc(a.step, b.step))
                .then(a.parent.cmp(&b.parent))
                .then(a.token.cmp(&b.token))
        });

        let mut next = Vec::with_capacity(k);
        for c in cands.into_iter().take(k) {
            let parent = &beam[c.parent];
            match (c.token, &steps[c.parent]) {
                (Some(t), Some(step)) => {
                    let mut hyp = parent.hyp.clone();
                    hyp.tokens.push(t);
                    hyp.log_prob = c.total;
                    hyp.attention_rows.push(g.value(step.attention).data().to_vec());
                    hyp.finished = t == EOS || hyp.tokens.len() >= max_len;
                    next.push(Live {
                        hyp,
                        state: step.state,
                        history: step.context,
                    });
                }
                _ => next.push(Live {
                    hyp: parent.hyp.clone(),
                    state: parent.state,
                    history: parent.history,
                }),
            }
        }
        beam = next;
    }
    Ok(beam.into_iter().map(|l| l.hyp).collect())
}

/// Picks the most probable token (lowest id on ties) at every step.
pub fn greedy_decode<S: Scalar>(
    net: &QgNet,
    g: &mut Graph<'_, S>,
    answer: &[usize],
    max_len: usize,
) -> Result<BeamHypothesis<S>> {
    if max_len == 0 {
        return Err(Error::InvalidArgument("max_len must be ≥ 1".into()));
    }
    let enc = net.encode_answer(g, answer)?;
    let mut state = enc.init;
    let mut history = net.initial_history(g);
    let mut hyp = BeamHypothesis {
        tokens: Vec::new(),
        log_prob: S::zero(),
        attention_rows: Vec::new(),
        finished: false,
    };
    while !hyp.finished {
        let prev = hyp.tokens.last().copied().unwrap_or(SOS);
        let step = net.decode_step(g, &enc, prev, state, history)?;
        let lp = g.log_softmax(step.logits);
        let lps = g.value(lp).data();
        let mut best = 0;
        for (t, &v) in lps.iter().enumerate() {
            if v > lps[best] {
                best = t;
            }
        }
        hyp.tokens.push(best);
        hyp.log_prob += lps[best];
        hyp.attention_rows.push(g.value(step.attention).data().to_vec());
        hyp.finished = best == EOS || hyp.tokens.len() >= max_len;
        state = step.state;
        history = step.context;
    }
    Ok(hyp)
}

/// Surface tokens with every UNK replaced by the answer word holding the most attention at that
/// step (leftmost on ties). EOS is dropped.
pub fn unk_replace<S: Scalar, T: AsRef<str>>(
    hyp: &BeamHypothesis<S>,
    answer_tokens: &[T],
    vocab: &Vocabulary,
) -> Result<Vec<String>> {
    let mut out = Vec::with_capacity(hyp.tokens.len());
    for (i, &t) in hyp.tokens.iter().enumerate() {
        match t {
            EOS => continue,
            UNK => {
                let row = hyp.attention_rows.get(i).ok_or_else(|| {
                    Error::InvalidArgument(format!("no attention row for emitted token {i}"))
                })?;
                if row.len() != answer_tokens.len() || row.is_empty() {
                    return Err(Error::InvalidArgument(format!(
                        "attention row {i} has {} entries for {} answer tokens",
                        row.len(),
                        answer_tokens.len()
                    )));
                }
                let mut best = 0;
                for (j, &w) in row.iter().enumerate() {
                    if w > row[best] {
                        best = j;
                    }
                }
                out.push(answer_tokens[best].as_ref().to_string());
            }
            _ => out.push(
                vocab
                    .token(t)
                    .ok_or(Error::IndexOutOfRange {
                        index: t,
                        size: vocab.len(),
                    })?
                    .to_string(),
            ),
        }
    }
    Ok(out)
}
