//! Answer sentence selection model.
//!
//! Question and answer are each read by a bidirectional GRU; the pair is represented as
//! `[v_q; v_a; v_q ⊙ v_a; e_c]` where `e_c` embeds the number of shared word types. A two-row
//! affine head produces class logits for the NLL objective, and the positive-class row passed
//! through `tanh` is the scalar relevance score `f_qa` used for ranking and for `P(a|q)`.

use rand::Rng;

use crate::autodiff::{Graph, ParamId, ParamSet, Var};
use crate::error::{Error, Result};
use crate::nn::{embed, BiGru, ModelDims};
use crate::scalar::Scalar;

/// Output row whose pre-activation defines `f_qa`.
pub const POSITIVE_CLASS: usize = 1;

/// Question / answer ids plus their co-occurrence bucket.
#[derive(Clone, Copy, Debug)]
pub struct QaInput<'a> {
    pub question: &'a [usize],
    pub answer: &'a [usize],
    pub cooccurrence: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Question,
    Answer,
}

#[derive(Clone, Debug)]
pub struct QaNet {
    pub question_embeddings: ParamId,
    pub answer_embeddings: ParamId,
    pub question_encoder: BiGru,
    pub answer_encoder: BiGru,
    pub cooccurrence_table: ParamId,
    pub output_weights: ParamId,
    pub output_bias: ParamId,
    pub cooc_vocab: usize,
}

impl QaNet {
    /// Registers the QA-only weights; the embedding tables are owned by the caller.
    pub fn register<S: Scalar, R: Rng>(
        params: &mut ParamSet<S>,
        dims: &ModelDims,
        question_embeddings: ParamId,
        answer_embeddings: ParamId,
        rng: &mut R,
    ) -> Result<Self> {
        let (e, h) = (dims.embedding_dim, dims.qa_hidden);
        let question_encoder = BiGru::register(params, "qa.question", e, h, rng)?;
        let answer_encoder = BiGru::register(params, "qa.answer", e, h, rng)?;
        let cooccurrence_table =
            params.insert_glorot("qa.cooc", &[dims.cooc_vocab, dims.cooc_dim], rng)?;
        let output_weights = params.insert_glorot("qa.out.W", &[2, dims.qa_feature_dim()], rng)?;
        let output_bias = params.insert_zeros("qa.out.b", &[2])?;
        Ok(QaNet {
            question_embeddings,
            answer_embeddings,
            question_encoder,
            answer_encoder,
            cooccurrence_table,
            output_weights,
            output_bias,
            cooc_vocab: dims.cooc_vocab,
        })
    }

    /// Weights owned by this network alone.
    pub fn own_param_ids(&self) -> Vec<ParamId> {
        self.question_encoder
            .param_ids()
            .chain(self.answer_encoder.param_ids())
            .chain([self.cooccurrence_table, self.output_weights, self.output_bias])
            .collect()
    }

    /// Concatenated final forward and backward states, length `2 * qa_hidden`.
    pub fn encode<S: Scalar>(&self, g: &mut Graph<'_, S>, ids: &[usize], side: Side) -> Result<Var> {
        if ids.is_empty() {
            return Err(Error::EmptySequence);
        }
        let (table, enc) = match side {
            Side::Question => (self.question_embeddings, &self.question_encoder),
            Side::Answer => (self.answer_embeddings, &self.answer_encoder),
        };
        let xs = embed(g, table, ids)?;
        enc.run(g, &xs)?.last(g)
    }

    /// Class logits `[2]` for already encoded question and answer vectors.
    pub fn logits<S: Scalar>(
        &self,
        g: &mut Graph<'_, S>,
        v_q: Var,
        v_a: Var,
        cooccurrence: usize,
    ) -> Result<Var> {
        let bucket = cooccurrence.min(self.cooc_vocab - 1);
        let prod = g.mul(v_q, v_a)?;
        let table = g.param(self.cooccurrence_table);
        let e_c = g.row_lookup(table, bucket)?;
        let features = g.concat(&[v_q, v_a, prod, e_c])?;
        let (w, b) = (g.param(self.output_weights), g.param(self.output_bias));
        let wx = g.matmul(w, features)?;
        g.add(wx, b)
    }

    /// `f_qa = tanh` of the positive-class logit.
    pub fn score_from_logits<S: Scalar>(&self, g: &mut Graph<'_, S>, logits: Var) -> Result<Var> {
        let pos = g.pick(logits, POSITIVE_CLASS)?;
        Ok(g.tanh(pos))
    }

    /// `-log softmax(logits)[label]`.
    pub fn nll_from_logits<S: Scalar>(
        &self,
        g: &mut Graph<'_, S>,
        logits: Var,
        label: u8,
    ) -> Result<Var> {
        if label > 1 {
            return Err(Error::InvalidArgument(format!("label must be 0 or 1, got {label}")));
        }
        let lp = g.log_softmax(logits);
        let picked = g.pick(lp, label as usize)?;
        Ok(g.neg(picked))
    }

    pub fn pair_logits<S: Scalar>(&self, g: &mut Graph<'_, S>, input: QaInput<'_>) -> Result<Var> {
        let v_q = self.encode(g, input.question, Side::Question)?;
        let v_a = self.encode(g, input.answer, Side::Answer)?;
        self.logits(g, v_q, v_a, input.cooccurrence)
    }

    pub fn score<S: Scalar>(&self, g: &mut Graph<'_, S>, input: QaInput<'_>) -> Result<Var> {
        let logits = self.pair_logits(g, input)?;
        self.score_from_logits(g, logits)
    }

    pub fn nll_loss<S: Scalar>(
        &self,
        g: &mut Graph<'_, S>,
        input: QaInput<'_>,
        label: u8,
    ) -> Result<Var> {
        let logits = self.pair_logits(g, input)?;
        self.nll_from_logits(g, logits, label)
    }

    /// `log P(a|q) = f(a,q) - log(exp f(a,q) + Σ_{a'} exp f(a',q))` over already computed scores.
    pub fn log_conditional_from_scores<S: Scalar>(
        &self,
        g: &mut Graph<'_, S>,
        score: Var,
        contrast_scores: &[Var],
    ) -> Result<Var> {
        if contrast_scores.is_empty() {
            return Err(Error::EmptyContrastSet);
        }
        let mut all = Vec::with_capacity(contrast_scores.len() + 1);
        all.push(score);
        all.extend_from_slice(contrast_scores);
        let stacked = g.concat(&all)?;
        let lp = g.log_softmax(stacked);
        g.pick(lp, 0)
    }

    /// `log P(a|q)` against the sampled answers `contrast` (each with its co-occurrence bucket).
    pub fn log_conditional<S: Scalar>(
        &self,
        g: &mut Graph<'_, S>,
        input: QaInput<'_>,
        contrast: &[(&[usize], usize)],
    ) -> Result<Var> {
        if contrast.is_empty() {
            return Err(Error::EmptyContrastSet);
        }
        let v_q = self.encode(g, input.question, Side::Question)?;
        let v_a = self.encode(g, input.answer, Side::Answer)?;
        let logits = self.logits(g, v_q, v_a, input.cooccurrence)?;
        let score = self.score_from_logits(g, logits)?;
        let mut others = Vec::with_capacity(contrast.len());
        for &(ids, cooc) in contrast {
            let v = self.encode(g, ids, Side::Answer)?;
            let l = self.logits(g, v_q, v, cooc)?;
            others.push(self.score_from_logits(g, l)?);
        }
        self.log_conditional_from_scores(g, score, &others)
    }
}

/// `exp f(a) / (exp f(a) + Σ exp f(a'))` on plain scores.
pub fn conditional_from_scores<S: Scalar>(score: S, contrast: &[S]) -> Result<S> {
    if contrast.is_empty() {
        return Err(Error::EmptyContrastSet);
    }
    let max = contrast.iter().copied().fold(score, S::max);
    let num = (score - max).exp();
    let den = num + contrast.iter().map(|&s| (s - max).exp()).sum::<S>();
    Ok(num / den)
}

/// Pairwise hinge `max(0, 1 - f(q,a) + f(q,a*))`. Kept as a reference; training uses the NLL head.
pub fn ranking_hinge_loss<S: Scalar>(positive_score: S, negative_score: S) -> S {
    (S::one() - positive_score + negative_score).max(S::zero())
}
