//! Joint QA/QG training with the duality regularizer.
//!
//! For a batch of `m` positive pairs with one sampled negative each:
//!
//! * `qa_loss  = (1/m) Σ_i [ l_qa(q_i, a_i, 1) + l_qa(q_i, a'_i, 0) ]`
//! * `qg_loss  = (1/m) Σ_i −log P(q_i | a_i)`
//! * `dual     = (1/m) Σ_i [ log P_a(a_i) + log P(q_i|a_i) − log P_q(q_i) − log P(a_i|q_i) ]²`
//!
//! `qa_loss + λ_a·dual` is differentiated with respect to the QA weights and both embedding
//! tables, `qg_loss + λ_q·dual` with respect to the QG weights and both embedding tables, and the
//! two gradients are summed before one AdaDelta step.

mod adadelta;
mod checkpoint;

pub use adadelta::{adadelta_update, AdaDelta, AdaDeltaConfig, AdaDeltaState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC};

use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, Graph, Var};
use crate::bigram_lm::BigramLm;
use crate::error::{Error, Result};
use crate::model::{DualModel, EncodedPair, Nets};
use crate::qa_net::Side;
use crate::scalar::{lit, Scalar};
use crate::text_data::{cooccurrence_bucket, make_batches, QAPair, TrainingBatch};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub lambda_q: f64,
    pub lambda_a: f64,
    pub batch_size: usize,
    pub pool_batches: usize,
    pub learning_rate: f64,
    pub adadelta_rho: f64,
    pub adadelta_eps: f64,
    pub max_epochs: usize,
    pub seed: u64,
    /// Add-α constant of both bigram language models.
    pub lm_alpha: f64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            lambda_q: 0.1,
            lambda_a: 0.1,
            batch_size: 64,
            pool_batches: 10,
            learning_rate: 2.0,
            adadelta_rho: 0.95,
            adadelta_eps: 1e-6,
            max_epochs: 30,
            seed: 0,
            lm_alpha: 1.0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.lambda_q >= 0.0 && self.lambda_a >= 0.0) {
            return bad("lambda_q and lambda_a must be non-negative");
        }
        if self.batch_size == 0 || self.pool_batches == 0 {
            return bad("batch_size and pool_batches must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.adadelta_eps > 0.0) {
            return bad("learning_rate and adadelta_eps must be positive");
        }
        if !(0.0..1.0).contains(&self.adadelta_rho) {
            return bad("adadelta_rho must lie in [0, 1)");
        }
        if !(self.lm_alpha > 0.0) {
            return bad("lm_alpha must be positive");
        }
        Ok(())
    }

    pub fn adadelta(&self) -> AdaDeltaConfig {
        AdaDeltaConfig {
            learning_rate: self.learning_rate,
            rho: self.adadelta_rho,
            eps: self.adadelta_eps,
        }
    }

    /// Batch-sampling seed of a given epoch.
    pub fn epoch_seed(&self, epoch: usize) -> u64 {
        self.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(epoch as u64)
    }
}

/// `[log P_a(a) + log P(q|a) − log P_q(q) − log P(a|q)]²` on plain numbers.
pub fn dual_loss<S: Scalar>(log_p_a: S, log_q_given_a: S, log_p_q: S, log_a_given_q: S) -> S {
    let gap = (log_p_a + log_q_given_a) - (log_p_q + log_a_given_q);
    gap * gap
}

/// A batch mapped to ids, with the LM marginals and contrast sets the dual term needs.
#[derive(Clone, Debug)]
pub struct PreparedBatch<S> {
    pub positives: Vec<EncodedPair>,
    /// `negatives[i]` shares the question of `positives[i]`.
    pub negatives: Vec<EncodedPair>,
    /// For positive `i`: every in-batch negative answer not token-identical to `a_i`, as
    /// `(negative index, co-occurrence bucket with q_i)`.
    pub contrast: Vec<Vec<(usize, usize)>>,
    pub log_p_q: Vec<S>,
    pub log_p_a: Vec<S>,
}

impl<S: Scalar> PreparedBatch<S> {
    pub fn new(
        model: &DualModel<S>,
        batch: &TrainingBatch,
        question_lm: &BigramLm<S>,
        answer_lm: &BigramLm<S>,
    ) -> Result<Self> {
        if batch.is_empty() || batch.negatives.len() != batch.positives.len() {
            return Err(Error::InvalidArgument(
                "batch needs one negative per positive and at least one positive".into(),
            ));
        }
        let encode = |p: &QAPair| model.encode_pair(&p.question_tokens, &p.answer_tokens);
        let positives = batch.positives.iter().map(encode).collect::<Result<Vec<_>>>()?;
        let negatives = batch.negatives.iter().map(encode).collect::<Result<Vec<_>>>()?;
        let cooc_vocab = model.dims.cooc_vocab;
        let contrast = batch
            .positives
            .iter()
            .map(|p| {
                batch
                    .negatives
                    .iter()
                    .enumerate()
                    .filter(|(_, n)| n.answer_tokens != p.answer_tokens)
                    .map(|(j, n)| (j, cooccurrence_bucket(&p.question_tokens, &n.answer_tokens, cooc_vocab)))
                    .collect()
            })
            .collect();
        let log_p_q = batch
            .positives
            .iter()
            .map(|p| question_lm.sentence_log_prob(&p.question_tokens))
            .collect::<Result<Vec<_>>>()?;
        let log_p_a = batch
            .positives
            .iter()
            .map(|p| answer_lm.sentence_log_prob(&p.answer_tokens))
            .collect::<Result<Vec<_>>>()?;
        Ok(PreparedBatch {
            positives,
            negatives,
            contrast,
            log_p_q,
            log_p_a,
        })
    }

    pub fn len(&self) -> usize {
        self.positives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty()
    }
}

/// QA objective nodes plus the intermediate vectors the dual term reuses.
pub struct QaTerms {
    pub loss: Var,
    pub question_vectors: Vec<Var>,
    pub negative_answer_vectors: Vec<Var>,
    pub positive_scores: Vec<Var>,
}

pub struct QgTerms {
    pub loss: Var,
    pub log_probs: Vec<Var>,
}

fn mean<S: Scalar>(g: &mut Graph<'_, S>, terms: &[Var]) -> Result<Var> {
    let total = g.sum_scalars(terms)?;
    Ok(g.scale(total, S::one() / lit(terms.len() as f64)))
}

pub fn qa_terms<S: Scalar>(g: &mut Graph<'_, S>, nets: &Nets, batch: &PreparedBatch<S>) -> Result<QaTerms> {
    let qa = &nets.qa;
    let mut nll = Vec::with_capacity(2 * batch.len());
    let mut question_vectors = Vec::with_capacity(batch.len());
    let mut negative_answer_vectors = Vec::with_capacity(batch.len());
    let mut positive_scores = Vec::with_capacity(batch.len());
    for (pos, neg) in batch.positives.iter().zip(&batch.negatives) {
        let v_q = qa.encode(g, &pos.question, Side::Question)?;
        let v_a = qa.encode(g, &pos.answer, Side::Answer)?;
        let logits = qa.logits(g, v_q, v_a, pos.cooccurrence)?;
        nll.push(qa.nll_from_logits(g, logits, 1)?);
        positive_scores.push(qa.score_from_logits(g, logits)?);

        let v_n = qa.encode(g, &neg.answer, Side::Answer)?;
        let logits = qa.logits(g, v_q, v_n, neg.cooccurrence)?;
        nll.push(qa.nll_from_logits(g, logits, 0)?);

        question_vectors.push(v_q);
        negative_answer_vectors.push(v_n);
    }
    // Σ over both labels, averaged over the m positives.
    let total = g.sum_scalars(&nll)?;
    let loss = g.scale(total, S::one() / lit(batch.len() as f64));
    Ok(QaTerms {
        loss,
        question_vectors,
        negative_answer_vectors,
        positive_scores,
    })
}

pub fn qg_terms<S: Scalar>(g: &mut Graph<'_, S>, nets: &Nets, batch: &PreparedBatch<S>) -> Result<QgTerms> {
    let mut log_probs = Vec::with_capacity(batch.len());
    for pos in &batch.positives {
        let enc = nets.qg.encode_answer(g, &pos.answer)?;
        log_probs.push(nets.qg.sequence_log_prob(g, &enc, &pos.question)?);
    }
    let mean_lp = mean(g, &log_probs)?;
    let loss = g.neg(mean_lp);
    Ok(QgTerms { loss, log_probs })
}

/// Mean squared duality gap over the batch.
pub fn dual_term<S: Scalar>(
    g: &mut Graph<'_, S>,
    nets: &Nets,
    batch: &PreparedBatch<S>,
    qa: &QaTerms,
    qg: &QgTerms,
) -> Result<Var> {
    let mut squares = Vec::with_capacity(batch.len());
    for i in 0..batch.len() {
        let v_q = qa.question_vectors[i];
        let mut others = Vec::with_capacity(batch.contrast[i].len());
        for &(j, cooc) in &batch.contrast[i] {
            let logits = nets.qa.logits(g, v_q, qa.negative_answer_vectors[j], cooc)?;
            others.push(nets.qa.score_from_logits(g, logits)?);
        }
        let log_qa = nets.qa.log_conditional_from_scores(g, qa.positive_scores[i], &others)?;
        let diff = g.sub(qg.log_probs[i], log_qa)?;
        let gap = g.add_scalar(diff, batch.log_p_a[i] - batch.log_p_q[i]);
        squares.push(g.square(gap));
    }
    mean(g, &squares)
}

/// Which objectives a step optimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// QA and QG tied by the dual term.
    Dual,
    /// QA and QG each on their own loss, from separate records.
    Independent,
    /// QA loss only.
    QaOnly,
}

/// Mean loss components of one step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepStats {
    pub step: usize,
    pub qa_loss: f64,
    pub qg_loss: Option<f64>,
    pub dual_loss: Option<f64>,
}

impl StepStats {
    pub fn is_finite(&self) -> bool {
        self.qa_loss.is_finite()
            && self.qg_loss.is_none_or(f64::is_finite)
            && self.dual_loss.is_none_or(f64::is_finite)
    }
}

pub struct DualTrainer<S> {
    pub model: DualModel<S>,
    pub config: TrainerConfig,
    pub question_lm: BigramLm<S>,
    pub answer_lm: BigramLm<S>,
    optimizer: AdaDelta<S>,
    grads: Gradients<S>,
    steps: usize,
}

impl<S: Scalar> DualTrainer<S> {
    /// Fits the two language models on the positive training pairs.
    pub fn new(model: DualModel<S>, train: &[QAPair], config: TrainerConfig) -> Result<Self> {
        config.validate()?;
        let positives: Vec<&QAPair> = train.iter().filter(|p| p.is_positive()).collect();
        let questions: Vec<Vec<&String>> = positives.iter().map(|p| p.question_tokens.iter().collect()).collect();
        let answers: Vec<Vec<&String>> = positives.iter().map(|p| p.answer_tokens.iter().collect()).collect();
        let alpha = lit(config.lm_alpha);
        let question_lm = BigramLm::fit(&questions, alpha)?;
        let answer_lm = BigramLm::fit(&answers, alpha)?;
        Ok(Self::with_lms(model, question_lm, answer_lm, config))
    }

    pub fn with_lms(model: DualModel<S>, question_lm: BigramLm<S>, answer_lm: BigramLm<S>, config: TrainerConfig) -> Self {
        let optimizer = AdaDelta::new(&model.params, config.adadelta());
        let grads = Gradients::zeros_like(&model.params);
        DualTrainer {
            model,
            config,
            question_lm,
            answer_lm,
            optimizer,
            grads,
            steps: 0,
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn optimizer(&self) -> &AdaDelta<S> {
        &self.optimizer
    }

    pub fn prepare(&self, batch: &TrainingBatch) -> Result<PreparedBatch<S>> {
        PreparedBatch::new(&self.model, batch, &self.question_lm, &self.answer_lm)
    }

    /// One dual-training step.
    pub fn train_step(&mut self, batch: &TrainingBatch) -> Result<StepStats> {
        self.step_with(batch, Objective::Dual)
    }

    pub fn step_with(&mut self, batch: &TrainingBatch, objective: Objective) -> Result<StepStats> {
        let prepared = self.prepare(batch)?;
        let step = self.steps + 1;
        let lambda_a: S = lit(self.config.lambda_a);
        let lambda_q: S = lit(self.config.lambda_q);
        let nets = &self.model.nets;
        self.grads.zero();
        let stats = match objective {
            Objective::Dual => {
                let mut g = Graph::new(&self.model.params);
                let qa = qa_terms(&mut g, nets, &prepared)?;
                let qg = qg_terms(&mut g, nets, &prepared)?;
                let dual = dual_term(&mut g, nets, &prepared, &qa, &qg)?;
                let stats = StepStats {
                    step,
                    qa_loss: g.item(qa.loss).to_f64_lossless(),
                    qg_loss: Some(g.item(qg.loss).to_f64_lossless()),
                    dual_loss: Some(g.item(dual).to_f64_lossless()),
                };
                if !stats.is_finite() {
                    return Err(Error::NonFinite { step });
                }
                let weighted = g.scale(dual, lambda_a);
                let j_qa = g.add(qa.loss, weighted)?;
                let weighted = g.scale(dual, lambda_q);
                let j_qg = g.add(qg.loss, weighted)?;
                g.backward(j_qa)?;
                g.accumulate_param_grads(&mut self.grads, nets.qa_param_ids());
                g.reset_grads();
                g.backward(j_qg)?;
                g.accumulate_param_grads(&mut self.grads, nets.qg_param_ids());
                stats
            }
            Objective::Independent | Objective::QaOnly => {
                let mut g = Graph::new(&self.model.params);
                let qa = qa_terms(&mut g, nets, &prepared)?;
                let qa_loss = g.item(qa.loss).to_f64_lossless();
                g.backward(qa.loss)?;
                g.accumulate_param_grads(&mut self.grads, nets.qa_param_ids());
                let qg_loss = if objective == Objective::Independent {
                    let mut g = Graph::new(&self.model.params);
                    let qg = qg_terms(&mut g, nets, &prepared)?;
                    g.backward(qg.loss)?;
                    g.accumulate_param_grads(&mut self.grads, nets.qg_param_ids());
                    Some(g.item(qg.loss).to_f64_lossless())
                } else {
                    None
                };
                let stats = StepStats {
                    step,
                    qa_loss,
                    qg_loss,
                    dual_loss: None,
                };
                if !stats.is_finite() {
                    return Err(Error::NonFinite { step });
                }
                stats
            }
        };
        if !self.grads.is_finite() {
            return Err(Error::NonFinite { step });
        }
        self.optimizer.step(&mut self.model.params, &self.grads)?;
        self.steps = step;
        Ok(stats)
    }

    /// One pass over freshly sampled batches of `train`.
    pub fn fit_epoch(&mut self, train: &[QAPair], epoch: usize, objective: Objective) -> Result<Vec<StepStats>> {
        let batches = make_batches(
            train,
            self.config.batch_size,
            self.config.pool_batches,
            self.config.epoch_seed(epoch),
        )?;
        batches
            .iter()
            .map(|b| self.step_with(b, objective))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_loss_anchors() {
        assert_eq!(dual_loss(-10.0, -20.0, -12.0, -18.0), 0.0);
        assert_eq!(dual_loss(-10.0, -20.0, -12.0, -17.0), 1.0);
    }

    #[test]
    fn dual_loss_ignores_term_order() {
        let (pa, qga, pq, aq) = (-3.25, -7.5, -4.0, -1.125);
        let forward = dual_loss(pa, qga, pq, aq);
        let swapped = dual_loss(pq, aq, pa, qga);
        assert_eq!(forward, swapped);
        assert_eq!(forward, ((pa + qga) - (pq + aq)) * ((pa + qga) - (pq + aq)));
    }

    #[test]
    fn config_validation() {
        assert!(TrainerConfig::default().validate().is_ok());
        let bad = TrainerConfig {
            lambda_q: -0.1,
            ..TrainerConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = TrainerConfig {
            batch_size: 0,
            ..TrainerConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn epoch_seeds_differ() {
        let c = TrainerConfig::default();
        assert_ne!(c.epoch_seed(1), c.epoch_seed(2));
    }
}
