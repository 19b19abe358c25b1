//! The same pipeline instantiated at `f32`.

use dualqa::dual_trainer::{load_checkpoint, save_checkpoint, Objective, TrainerConfig};
use dualqa::evaluation::evaluate_qa;
use dualqa::nn::ModelDims;
use dualqa::synthetic::toy_corpus;
use dualqa::{DualModel32, DualTrainer32};

#[test]
fn f32_training_round_trip() {
    let corpus = toy_corpus(20, 10, 6).unwrap();
    let model = DualModel32::from_training_pairs(ModelDims::tiny(6), &corpus.train, 3).unwrap();
    let config = TrainerConfig {
        batch_size: 4,
        ..TrainerConfig::default()
    };
    let mut trainer = DualTrainer32::new(model, &corpus.train, config).unwrap();
    for epoch in 1..=3 {
        let stats = trainer.fit_epoch(&corpus.train, epoch, Objective::Dual).unwrap();
        assert!(stats.iter().all(|s| s.is_finite()));
    }
    let report = evaluate_qa(&trainer.model, &corpus.dev).unwrap();
    assert!((0.0..=1.0).contains(&report.map));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&path, &trainer.model, &trainer.question_lm, &trainer.answer_lm, &serde_json::json!({})).unwrap();
    let (restored, _, _) = load_checkpoint::<f32>(&path).unwrap().into_model(ModelDims::tiny(6)).unwrap();
    let q = &corpus.dev[0].question_tokens;
    let a = &corpus.dev[0].answer_tokens;
    let s = restored.qa_score(q, a).unwrap();
    assert_eq!(s, trainer.model.qa_score(q, a).unwrap());
    assert!(s.abs() < 1.0);
}
