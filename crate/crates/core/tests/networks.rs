//! Properties of the QA and QG networks on small instances.

mod common;

use dualqa::autodiff::{grad_check, Graph};
use dualqa::model::DualModel;
use dualqa::nn::ModelDims;
use dualqa::qa_net::Side;
use dualqa::text_data::{Vocabulary, EOS};

use common::*;

const EPS: f64 = 3e-4;

fn zero_all(model: &mut DualModel<f64>) {
    model.params.map_values(|_, t| t.fill(0.0));
}

#[test]
fn qa_nll_gradients_on_three_and_four_tokens() {
    let mut model = tiny_model(8, 1);
    let pair = model.encode_pair(&words("who wrote it"), &words("rome is italy in")).unwrap();
    assert_eq!((pair.question.len(), pair.answer.len()), (3, 4));
    let nets = model.nets.clone();
    let ids = nets.qa_param_ids();
    for label in [0, 1] {
        let report = grad_check(&mut model.params, &ids, |g| nets.qa.nll_loss(g, pair.input(), label), EPS, 1e-4).unwrap();
        assert!(report.passed(), "label {label}: {}", report.max_relative_error);
    }
}

#[test]
fn qg_nll_gradients_on_two_token_question() {
    let mut model = tiny_model(8, 2);
    let pair = model.encode_pair(&words("who wrote"), &words("tolkien wrote it")).unwrap();
    let nets = model.nets.clone();
    let ids = nets.qg_param_ids();
    let report =
        grad_check(&mut model.params, &ids, |g| nets.qg.nll_loss(g, &pair.answer, &pair.question), EPS, 1e-4).unwrap();
    assert!(report.passed(), "{}", report.max_relative_error);
}

#[test]
fn zero_parameters_give_zero_encodings_and_scores() {
    let mut model = tiny_model(6, 3);
    zero_all(&mut model);
    let pair = model.encode_pair(&words("where is rome ?"), &words("rome is italy")).unwrap();
    let mut g = Graph::new(&model.params);
    let v = model.nets.qa.encode(&mut g, &pair.question, Side::Question).unwrap();
    assert_eq!(g.value(v).len(), 12);
    assert!(g.value(v).data().iter().all(|&x| x == 0.0));
    let s = model.nets.qa.score(&mut g, pair.input()).unwrap();
    assert_eq!(g.item(s), 0.0);
    let nll = model.nets.qa.nll_loss(&mut g, pair.input(), 1).unwrap();
    assert!((g.item(nll) - 2f64.ln()).abs() < 1e-15);
}

#[test]
fn rank_is_invariant_under_increasing_transforms() {
    let model = tiny_model(8, 4);
    let question = words("where is rome ?");
    let candidates: Vec<Vec<String>> = ANSWERS.iter().map(|a| words(a)).collect();
    let order = model.rank_candidates(&question, &candidates).unwrap();
    let scores = model.score_candidates(&question, &candidates).unwrap();
    let cubed: Vec<f64> = scores.iter().map(|s| s.powi(3) * 10.0 + 2.0).collect();
    assert_eq!(order, dualqa::metrics::rank_by_scores(&cubed));
    assert_eq!(order, oracle_order(&scores));
}

fn oracle_order(scores: &[f64]) -> Vec<usize> {
    let ranks = oracle_ranks(scores);
    (1..=scores.len()).map(|r| ranks.iter().position(|&x| x == r).unwrap()).collect()
}

/// Question vocabulary of exactly `n` entries including the reserved ones.
fn vocab_of_size(n: usize) -> Vocabulary {
    let words: Vec<String> = (0..n - 4).map(|i| format!("w{i}")).collect();
    Vocabulary::from_tokens(words, n).unwrap()
}

#[test]
fn uniform_decoder_log_prob_closed_form() {
    let answers = Vocabulary::from_tokens(vec!["x".into(), "y".into()], 10).unwrap();
    let mut model = DualModel::<f64>::new(ModelDims::tiny(4), vocab_of_size(30_004), answers, 0).unwrap();
    let (w, b) = (model.nets.qg.output_weights, model.nets.qg.output_bias);
    model.params.get_mut(w).fill(0.0);
    model.params.get_mut(b).fill(0.0);
    let lp = model.question_log_prob(&["w1", "w7", "w2"], &["x", "y"]).unwrap();
    assert!((lp - 4.0 * (1.0f64 / 30_004.0).ln()).abs() < 1e-9);
    assert!((lp - (-41.2363)).abs() < 1e-4);

    let pair = model.encode_pair(&["w1", "w7", "w2"], &["x", "y"]).unwrap();
    let mut g = Graph::new(&model.params);
    let nll = model.nets.qg.nll_loss(&mut g, &pair.answer, &pair.question).unwrap();
    assert!((g.item(nll) + lp).abs() < 1e-12);
}

#[test]
fn decoder_distributions_are_valid_at_every_step() {
    let model = tiny_model(8, 6);
    let pair = model.encode_pair(&words("who wrote it ?"), &words("tolkien wrote it")).unwrap();
    let mut g = Graph::new(&model.params);
    for t in 0..=pair.question.len() {
        let d = model.nets.qg.next_distribution(&mut g, &pair.answer, &pair.question[..t]).unwrap();
        assert_eq!(d.len(), model.question_vocab.len());
        assert!(d.data().iter().all(|&p| p >= 0.0));
        assert!((d.data().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    assert!(model.nets.qg.next_distribution(&mut g, &pair.answer, &[model.question_vocab.len()]).is_err());
}

#[test]
fn zero_projection_gives_uniform_distribution() {
    let mut model = tiny_model(8, 7);
    let (w, b) = (model.nets.qg.output_weights, model.nets.qg.output_bias);
    model.params.get_mut(w).fill(0.0);
    model.params.get_mut(b).fill(0.0);
    let pair = model.encode_pair(&words("who ?"), &words("he is bob")).unwrap();
    let mut g = Graph::new(&model.params);
    let d = model.nets.qg.next_distribution(&mut g, &pair.answer, &pair.question).unwrap();
    let uniform = 1.0 / d.len() as f64;
    assert!(d.data().iter().all(|&p| (p - uniform).abs() < 1e-15));
}

#[test]
fn appending_tokens_never_raises_question_probability() {
    let model = tiny_model(8, 8);
    let answer = words("rome is italy");
    let q = words("where is rome ?");
    let mut prev = 0.0;
    for n in 1..=q.len() {
        // Prefix without EOS: sum over emitted tokens only.
        let pair = model.encode_pair(&q[..n], &answer).unwrap();
        let mut g = Graph::new(&model.params);
        let enc = model.nets.qg.encode_answer(&mut g, &pair.answer).unwrap();
        let full = model.nets.qg.sequence_log_prob(&mut g, &enc, &pair.question).unwrap();
        let lp = g.item(full);
        assert!(lp < 0.0 && lp.exp() > 0.0);
        let d = model.nets.qg.next_distribution(&mut g, &pair.answer, &pair.question).unwrap();
        let without_eos = lp - d.data()[EOS].ln();
        assert!(without_eos <= prev);
        prev = without_eos;
    }
}

#[test]
fn beam_hypotheses_are_sorted_and_distinct() {
    let model = tiny_model(8, 9);
    for k in [1, 3, 5] {
        let hyps = model.beam_search(&words("tolkien wrote it"), k, 5).unwrap();
        assert_eq!(hyps.len(), k);
        assert!(hyps.windows(2).all(|w| w[0].log_prob >= w[1].log_prob));
        for (i, a) in hyps.iter().enumerate() {
            assert!(hyps[i + 1..].iter().all(|b| b.tokens != a.tokens));
            assert_eq!(a.attention_rows.len(), a.tokens.len());
            for row in &a.attention_rows {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}
