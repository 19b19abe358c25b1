//! Dataset-level evaluation of a trained model.

use serde::Serialize;

use crate::error::Result;
use crate::metrics::{bleu4, mean_average_precision, mean_reciprocal_rank, precision_at_1, RankedQuery};
use crate::model::DualModel;
use crate::qg_net::unk_replace;
use crate::scalar::Scalar;
use crate::text_data::QAPair;

/// Rows grouped by `question_id`, in order of first appearance.
pub fn group_by_question(pairs: &[QAPair]) -> Vec<Vec<&QAPair>> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: std::collections::HashMap<&str, Vec<&QAPair>> = Default::default();
    for p in pairs {
        groups
            .entry(&p.question_id)
            .or_insert_with(|| {
                order.push(&p.question_id);
                Vec::new()
            })
            .push(p);
    }
    order
        .into_iter()
        .map(|q| groups.remove(q).expect("grouped"))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RankingReport {
    pub map: f64,
    pub mrr: f64,
    pub p_at_1: f64,
    pub num_questions: usize,
    /// Questions without any positive candidate.
    pub num_skipped: usize,
}

/// Ranks each question's candidates with the QA model.
pub fn evaluate_qa<S: Scalar>(model: &DualModel<S>, pairs: &[QAPair]) -> Result<RankingReport> {
    let mut queries = Vec::new();
    let mut skipped = 0;
    for group in group_by_question(pairs) {
        if !group.iter().any(|p| p.is_positive()) {
            skipped += 1;
            continue;
        }
        let question = &group[0].question_tokens;
        let scores = group
            .iter()
            .map(|p| model.qa_score(question, &p.answer_tokens))
            .collect::<Result<Vec<S>>>()?;
        queries.push(RankedQuery::new(scores, group.iter().map(|p| p.is_positive()).collect())?);
    }
    Ok(RankingReport {
        map: mean_average_precision(&queries)?.to_f64_lossless(),
        mrr: mean_reciprocal_rank(&queries)?.to_f64_lossless(),
        p_at_1: precision_at_1(&queries)?.to_f64_lossless(),
        num_questions: queries.len(),
        num_skipped: skipped,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GenerationReport {
    pub bleu4: f64,
    pub num_pairs: usize,
}

/// Greedy-decodes every positive pair's answer, replaces UNKs and scores corpus BLEU-4 against
/// the gold questions.
pub fn evaluate_qg<S: Scalar>(model: &DualModel<S>, pairs: &[QAPair], max_len: usize) -> Result<GenerationReport> {
    let mut candidates = Vec::new();
    let mut references = Vec::new();
    for p in pairs.iter().filter(|p| p.is_positive()) {
        let hyp = model.greedy_decode(&p.answer_tokens, max_len)?;
        candidates.push(unk_replace(&hyp, &p.answer_tokens, &model.question_vocab)?);
        references.push(p.question_tokens.clone());
    }
    Ok(GenerationReport {
        bleu4: bleu4(&candidates, &references)?,
        num_pairs: candidates.len(),
    })
}
