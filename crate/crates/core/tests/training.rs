//! End-to-end behaviour of joint training on the toy corpus.

use dualqa::dual_trainer::{DualTrainer, Objective, StepStats, TrainerConfig};
use dualqa::model::DualModel;
use dualqa::nn::ModelDims;
use dualqa::synthetic::toy_corpus;

fn mean(stats: &[StepStats], f: impl Fn(&StepStats) -> f64) -> f64 {
    stats.iter().map(f).sum::<f64>() / stats.len() as f64
}

#[test]
fn dual_training_lowers_both_losses() {
    let corpus = toy_corpus(200, 10, 11).unwrap();
    let dims = ModelDims {
        embedding_dim: 16,
        qa_hidden: 16,
        qg_hidden: 16,
        attention_dim: 8,
        ..ModelDims::default()
    };
    let config = TrainerConfig {
        batch_size: 8,
        seed: 1,
        ..TrainerConfig::default()
    };
    let model = DualModel::<f64>::from_training_pairs(dims, &corpus.train, 1).unwrap();
    let mut trainer = DualTrainer::new(model, &corpus.train, config).unwrap();
    let first = trainer.fit_epoch(&corpus.train, 1, Objective::Dual).unwrap();
    let mut last = first.clone();
    for epoch in 2..=30 {
        last = trainer.fit_epoch(&corpus.train, epoch, Objective::Dual).unwrap();
    }
    assert!(last.iter().all(StepStats::is_finite));
    let qa = (mean(&first, |s| s.qa_loss), mean(&last, |s| s.qa_loss));
    let qg = (mean(&first, |s| s.qg_loss.unwrap()), mean(&last, |s| s.qg_loss.unwrap()));
    assert!(qa.1 < qa.0, "qa_loss {qa:?}");
    assert!(qg.1 < qg.0, "qg_loss {qg:?}");
    assert_eq!(trainer.steps_taken(), 30 * 25);
}

#[test]
fn objectives_report_their_components() {
    let corpus = toy_corpus(20, 10, 2).unwrap();
    let config = TrainerConfig {
        batch_size: 5,
        ..TrainerConfig::default()
    };
    for (objective, qg, dual) in [
        (Objective::Dual, true, true),
        (Objective::Independent, true, false),
        (Objective::QaOnly, false, false),
    ] {
        let model = DualModel::<f64>::from_training_pairs(ModelDims::tiny(4), &corpus.train, 0).unwrap();
        let mut trainer = DualTrainer::new(model, &corpus.train, config.clone()).unwrap();
        let stats = trainer.fit_epoch(&corpus.train, 1, objective).unwrap();
        assert_eq!(stats.len(), 4);
        assert!(stats.iter().all(|s| s.qg_loss.is_some() == qg && s.dual_loss.is_some() == dual));
        assert_eq!(stats.last().unwrap().step, 4);
    }
}

#[test]
fn qa_only_leaves_generator_weights_untouched() {
    let corpus = toy_corpus(20, 10, 2).unwrap();
    let model = DualModel::<f64>::from_training_pairs(ModelDims::tiny(4), &corpus.train, 0).unwrap();
    let before = model.params.clone();
    let own = model.nets.qg.own_param_ids();
    let mut trainer = DualTrainer::new(model, &corpus.train, TrainerConfig::default()).unwrap();
    trainer.fit_epoch(&corpus.train, 1, Objective::QaOnly).unwrap();
    for id in own {
        assert_eq!(trainer.model.params.get(id), before.get(id));
    }
    let qa = trainer.model.nets.qa.output_weights;
    assert_ne!(trainer.model.params.get(qa), before.get(qa));
}
