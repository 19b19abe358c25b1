//! The QA and QG networks together with their shared embedding tables and vocabularies.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, ParamId, ParamSet};
use crate::error::{Error, Result};
use crate::metrics::rank_by_scores;
use crate::nn::ModelDims;
use crate::qa_net::{QaInput, QaNet};
use crate::qg_net::{beam_search, greedy_decode, unk_replace, BeamHypothesis, QgNet};
use crate::scalar::Scalar;
use crate::text_data::{build_vocab, cooccurrence_bucket, QAPair, Vocabulary};

/// Parameter handles for both networks. Kept apart from the [`ParamSet`] so graphs can borrow
/// the weights while the handles are used freely.
#[derive(Clone, Debug)]
pub struct Nets {
    pub question_embeddings: ParamId,
    pub answer_embeddings: ParamId,
    pub qa: QaNet,
    pub qg: QgNet,
}

impl Nets {
    /// `θ_qa`: QA weights plus both embedding tables.
    pub fn qa_param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.question_embeddings, self.answer_embeddings];
        ids.extend(self.qa.own_param_ids());
        ids
    }

    /// `θ_qg`: QG weights plus both embedding tables.
    pub fn qg_param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.question_embeddings, self.answer_embeddings];
        ids.extend(self.qg.own_param_ids());
        ids
    }
}

/// A question/answer pair mapped to ids, with its co-occurrence bucket from the raw tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedPair {
    pub question: Vec<usize>,
    pub answer: Vec<usize>,
    pub cooccurrence: usize,
}

impl EncodedPair {
    pub fn input(&self) -> QaInput<'_> {
        QaInput {
            question: &self.question,
            answer: &self.answer,
            cooccurrence: self.cooccurrence,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DualModel<S> {
    pub params: ParamSet<S>,
    pub nets: Nets,
    pub dims: ModelDims,
    pub question_vocab: Vocabulary,
    pub answer_vocab: Vocabulary,
}

impl<S: Scalar> DualModel<S> {
    /// Randomly initialized model. Registration order (and so the RNG stream) is fixed.
    pub fn new(
        dims: ModelDims,
        question_vocab: Vocabulary,
        answer_vocab: Vocabulary,
        seed: u64,
    ) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let e = dims.embedding_dim;
        let question_embeddings =
            params.insert_glorot("emb.question", &[question_vocab.len(), e], &mut rng)?;
        let answer_embeddings =
            params.insert_glorot("emb.answer", &[answer_vocab.len(), e], &mut rng)?;
        let qa = QaNet::register(&mut params, &dims, question_embeddings, answer_embeddings, &mut rng)?;
        let qg = QgNet::register(
            &mut params,
            &dims,
            question_vocab.len(),
            question_embeddings,
            answer_embeddings,
            &mut rng,
        )?;
        Ok(DualModel {
            params,
            nets: Nets {
                question_embeddings,
                answer_embeddings,
                qa,
                qg,
            },
            dims,
            question_vocab,
            answer_vocab,
        })
    }

    /// Vocabularies from the training rows (questions of every row, answers of every row), capped
    /// at `dims.vocab_size` words each.
    pub fn from_training_pairs(dims: ModelDims, pairs: &[QAPair], seed: u64) -> Result<Self> {
        let questions: Vec<Vec<&String>> = pairs.iter().map(|p| p.question_tokens.iter().collect()).collect();
        let answers: Vec<Vec<&String>> = pairs.iter().map(|p| p.answer_tokens.iter().collect()).collect();
        let qv = build_vocab(&questions, dims.vocab_size)?;
        let av = build_vocab(&answers, dims.vocab_size)?;
        DualModel::new(dims, qv, av, seed)
    }

    /// Copies every tensor of `source` into the parameter of the same name.
    pub fn load_params(&mut self, source: &ParamSet<S>) -> Result<()> {
        if source.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                self.params.len(),
                source.len()
            )));
        }
        let ids: Vec<ParamId> = self.params.ids().collect();
        for id in ids {
            let name = self.params.name(id).to_string();
            let src = source
                .id(&name)
                .map(|sid| source.get(sid))
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            let dst = self.params.get_mut(id);
            if src.shape() != dst.shape() {
                return Err(Error::shape("restore", dst.shape(), src.shape()));
            }
            *dst = src.clone();
        }
        Ok(())
    }

    pub fn encode_pair<T: AsRef<str>>(&self, question: &[T], answer: &[T]) -> Result<EncodedPair> {
        Ok(EncodedPair {
            question: self.question_vocab.encode(question)?,
            answer: self.answer_vocab.encode(answer)?,
            cooccurrence: cooccurrence_bucket(question, answer, self.dims.cooc_vocab),
        })
    }

    /// `f_qa(a, q)` in (−1, 1).
    pub fn qa_score<T: AsRef<str>>(&self, question: &[T], answer: &[T]) -> Result<S> {
        let pair = self.encode_pair(question, answer)?;
        let mut g = Graph::new(&self.params);
        let s = self.nets.qa.score(&mut g, pair.input())?;
        Ok(g.item(s))
    }

    pub fn score_candidates<T: AsRef<str>>(&self, question: &[T], candidates: &[Vec<T>]) -> Result<Vec<S>> {
        candidates
            .iter()
            .map(|a| self.qa_score(question, a))
            .collect()
    }

    /// Candidate indices by descending `f_qa`, lower index first on ties.
    pub fn rank_candidates<T: AsRef<str>>(&self, question: &[T], candidates: &[Vec<T>]) -> Result<Vec<usize>> {
        if candidates.is_empty() {
            return Err(Error::InvalidArgument("no candidates to rank".into()));
        }
        Ok(rank_by_scores(&self.score_candidates(question, candidates)?))
    }

    /// `P(a|q)` normalized over `{a} ∪ contrast`.
    pub fn qa_conditional_prob<T: AsRef<str>>(
        &self,
        question: &[T],
        answer: &[T],
        contrast: &[Vec<T>],
    ) -> Result<S> {
        if contrast.is_empty() {
            return Err(Error::EmptyContrastSet);
        }
        let pair = self.encode_pair(question, answer)?;
        let others = contrast
            .iter()
            .map(|a| {
                Ok((
                    self.answer_vocab.encode(a)?,
                    cooccurrence_bucket(question, a, self.dims.cooc_vocab),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<(&[usize], usize)> = others.iter().map(|(a, c)| (a.as_slice(), *c)).collect();
        let mut g = Graph::new(&self.params);
        let lp = self.nets.qa.log_conditional(&mut g, pair.input(), &refs)?;
        Ok(g.item(lp).exp())
    }

    /// `log P(q|a)` under the QG model, including the EOS step.
    pub fn question_log_prob<T: AsRef<str>>(&self, question: &[T], answer: &[T]) -> Result<S> {
        let pair = self.encode_pair(question, answer)?;
        let mut g = Graph::new(&self.params);
        let enc = self.nets.qg.encode_answer(&mut g, &pair.answer)?;
        let lp = self.nets.qg.sequence_log_prob(&mut g, &enc, &pair.question)?;
        Ok(g.item(lp))
    }

    pub fn beam_search<T: AsRef<str>>(
        &self,
        answer: &[T],
        k: usize,
        max_len: usize,
    ) -> Result<Vec<BeamHypothesis<S>>> {
        let ids = self.answer_vocab.encode(answer)?;
        let mut g = Graph::new(&self.params);
        beam_search(&self.nets.qg, &mut g, &ids, k, max_len)
    }

    pub fn greedy_decode<T: AsRef<str>>(&self, answer: &[T], max_len: usize) -> Result<BeamHypothesis<S>> {
        let ids = self.answer_vocab.encode(answer)?;
        let mut g = Graph::new(&self.params);
        greedy_decode(&self.nets.qg, &mut g, &ids, max_len)
    }

    /// Top-`k` questions for `answer` as `(log_prob, surface tokens)`, UNKs replaced.
    pub fn generate<T: AsRef<str>>(
        &self,
        answer: &[T],
        k: usize,
        max_len: usize,
    ) -> Result<Vec<(S, Vec<String>)>> {
        self.beam_search(answer, k, max_len)?
            .into_iter()
            .map(|h| Ok((h.log_prob, unk_replace(&h, answer, &self.question_vocab)?)))
            .collect()
    }
}
