//! Attention-based sequence-to-sequence question generator.
//!
//! The answer is read by a bidirectional GRU. Its concatenated final states seed the decoder
//! GRU (both are `2 * qg_hidden` wide, so no bridge layer is needed). At every step the
//! attention scorer sees the decoder state, each encoder state, and the previous step's
//! attention-weighted context; the output layer reads `[s_t; c_t]`.

mod beam;

pub use beam::{beam_search, greedy_decode, unk_replace, BeamHypothesis};

use rand::Rng;

use crate::autodiff::{Graph, ParamId, ParamSet, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{embed, BiGru, GruCell, ModelDims};
use crate::scalar::Scalar;
use crate::text_data::{EOS, SOS};

#[derive(Clone, Debug)]
pub struct QgNet {
    pub question_embeddings: ParamId,
    pub answer_embeddings: ParamId,
    pub encoder: BiGru,
    pub decoder: GruCell,
    /// `[attention × state]`
    pub attn_state: ParamId,
    /// `[state × attention]`, applied to the stacked encoder states.
    pub attn_keys: ParamId,
    /// `[attention × state]`, applied to the previous context.
    pub attn_history: ParamId,
    /// `[attention]`
    pub attn_score: ParamId,
    /// `[|V_q| × 2·state]`
    pub output_weights: ParamId,
    pub output_bias: ParamId,
    pub vocab_size: usize,
    pub state_dim: usize,
}

/// Encoder output for one answer.
#[derive(Clone, Copy, Debug)]
pub struct EncodedAnswer {
    /// `[|a| × state]`, row `i` is `[fwd_i; bwd_i]`.
    pub states: Var,
    /// `states · attn_keys`, `[|a| × attention]`; independent of the decoder step.
    pub keys: Var,
    /// Initial decoder state.
    pub init: Var,
    pub len: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct DecodeStep {
    pub logits: Var,
    pub state: Var,
    pub attention: Var,
    pub context: Var,
}

impl QgNet {
    pub fn register<S: Scalar, R: Rng>(
        params: &mut ParamSet<S>,
        dims: &ModelDims,
        question_vocab_size: usize,
        question_embeddings: ParamId,
        answer_embeddings: ParamId,
        rng: &mut R,
    ) -> Result<Self> {
        let (e, h, a) = (dims.embedding_dim, dims.qg_hidden, dims.attention_dim);
        let state = dims.decoder_hidden();
        let encoder = BiGru::register(params, "qg.encoder", e, h, rng)?;
        let decoder = GruCell::register(params, "qg.decoder", e, state, rng)?;
        let attn_state = params.insert_glorot("qg.attn.W_s", &[a, state], rng)?;
        let attn_keys = params.insert_glorot("qg.attn.W_h", &[state, a], rng)?;
        let attn_history = params.insert_glorot("qg.attn.W_a", &[a, state], rng)?;
        let attn_score = params.insert_glorot("qg.attn.w", &[a], rng)?;
        let output_weights =
            params.insert_glorot("qg.out.W", &[question_vocab_size, 2 * state], rng)?;
        let output_bias = params.insert_zeros("qg.out.b", &[question_vocab_size])?;
        Ok(QgNet {
            question_embeddings,
            answer_embeddings,
            encoder,
            decoder,
            attn_state,
            attn_keys,
            attn_history,
            attn_score,
            output_weights,
            output_bias,
            vocab_size: question_vocab_size,
            state_dim: state,
        })
    }

    /// Weights owned by this network alone.
    pub fn own_param_ids(&self) -> Vec<ParamId> {
        self.encoder
            .param_ids()
            .chain(self.decoder.param_ids())
            .chain([
                self.attn_state,
                self.attn_keys,
                self.attn_history,
                self.attn_score,
                self.output_weights,
                self.output_bias,
            ])
            .collect()
    }

    pub fn encode_answer<S: Scalar>(
        &self,
        g: &mut Graph<'_, S>,
        answer: &[usize],
    ) -> Result<EncodedAnswer> {
        if answer.is_empty() {
            return Err(Error::EmptySequence);
        }
        let xs = embed(g, self.answer_embeddings, answer)?;
        let run = self.encoder.run(g, &xs)?;
        let rows = run
            .forward
            .iter()
            .zip(&run.backward)
            .map(|(&f, &b)| g.concat(&[f, b]))
            .collect::<Result<Vec<_>>>()?;
        let states = g.stack(&rows)?;
        let wk = g.param(self.attn_keys);
        let keys = g.matmul(states, wk)?;
        let init = run.last(g)?;
        Ok(EncodedAnswer {
            states,
            keys,
            init,
            len: answer.len(),
        })
    }

    /// Zero history used at the first decoding step.
    pub fn initial_history<S: Scalar>(&self, g: &mut Graph<'_, S>) -> Var {
        g.zeros(&[self.state_dim])
    }

    /// `α_t = softmax_i wᵀ tanh(W_s s_t + W_h h_i + W_a history)`, `c_t = Σ_i α_{t,i} h_i`.
    pub fn attention_step<S: Scalar>(
        &self,
        g: &mut Graph<'_, S>,
        enc: &EncodedAnswer,
        state: Var,
        history: Var,
    ) -> Result<(Var, Var)> {
        let (ws, wa, w) = (
            g.param(self.attn_state),
            g.param(self.attn_history),
            g.param(self.attn_score),
        );
        let qs = g.matmul(ws, state)?;
        let qh = g.matmul(wa, history)?;
        let query = g.add(qs, qh)?;
        let pre = g.add(enc.keys, query)?;
        let hidden = g.tanh(pre);
        let scores = g.matmul(hidden, w)?;
        let alpha = g.softmax(scores);
        let context = g.matmul(alpha, enc.states)?;
        Ok((alpha, context))
    }

    /// Advances the decoder by one token and produces next-token logits over the question vocabulary.
    pub fn decode_step<S: Scalar>(
        &self,
        g: &mut Graph<'_, S>,
        enc: &EncodedAnswer,
        prev_token: usize,
        state: Var,
        history: Var,
    ) -> Result<DecodeStep> {
        if prev_token >= self.vocab_size {
            return Err(Error::IndexOutOfRange {
                index: prev_token,
                size: self.vocab_size,
            });
        }
        let table = g.param(self.question_embeddings);
        let x = g.row_lookup(table, prev_token)?;
        let state = self.decoder.step(g, x, state)?;
        let (attention, context) = self.attention_step(g, enc, state, history)?;
        let joined = g.concat(&[state, context])?;
        let (w, b) = (g.param(self.output_weights), g.param(self.output_bias));
        let wx = g.matmul(w, joined)?;
        let logits = g.add(wx, b)?;
        Ok(DecodeStep {
            logits,
            state,
            attention,
            context,
        })
    }

    /// Teacher-forced `Σ_t log P(q_t | q_<t, a)` over `question` followed by EOS.
    pub fn sequence_log_prob<S: Scalar>(
        &self,
        g: &mut Graph<'_, S>,
        enc: &EncodedAnswer,
        question: &[usize],
    ) -> Result<Var> {
        if question.is_empty() {
            return Err(Error::EmptySequence);
        }
        let mut prev = SOS;
        let mut state = enc.init;
        let mut history = self.initial_history(g);
        let mut terms = Vec::with_capacity(question.len() + 1);
        for &target in question.iter().chain(std::iter::once(&EOS)) {
            let step = self.decode_step(g, enc, prev, state, history)?;
            let lp = g.log_softmax(step.logits);
            terms.push(g.pick(lp, target)?);
            prev = target;
            state = step.state;
            history = step.context;
        }
        g.sum_scalars(&terms)
    }

    /// `-log P(q|a)`.
    pub fn nll_loss<S: Scalar>(
        &self,
        g: &mut Graph<'_, S>,
        answer: &[usize],
        question: &[usize],
    ) -> Result<Var> {
        let enc = self.encode_answer(g, answer)?;
        let lp = self.sequence_log_prob(g, &enc, question)?;
        Ok(g.neg(lp))
    }

    /// Next-token probabilities after `prefix` (teacher forced), as a plain tensor.
    pub fn next_distribution<S: Scalar>(
        &self,
        g: &mut Graph<'_, S>,
        answer: &[usize],
        prefix: &[usize],
    ) -> Result<Tensor<S>> {
        let enc = self.encode_answer(g, answer)?;
        let history = self.initial_history(g);
        let mut step = self.decode_step(g, &enc, SOS, enc.init, history)?;
        for &tok in prefix {
            step = self.decode_step(g, &enc, tok, step.state, step.context)?;
        }
        let probs = g.softmax(step.logits);
        Ok(g.value(probs).clone())
    }
}
