//! Joint training of an answer-selection model and a question-generation model tied by a
//! probabilistic duality regularizer, on a small tape-based autodiff engine.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix `f64`, with
//! `*32` variants for `f32`.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod bigram_lm;
pub mod cli;
pub mod dual_trainer;
pub mod error;
pub mod evaluation;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod qa_net;
pub mod qg_net;
pub mod scalar;
pub mod synthetic;
pub mod text_data;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = autodiff::Tensor<f64>;
pub type ParamSet = autodiff::ParamSet<f64>;
pub type Graph<'p> = autodiff::Graph<'p, f64>;
pub type BigramLm = bigram_lm::BigramLm<f64>;
pub type DualModel = model::DualModel<f64>;
pub type DualTrainer = dual_trainer::DualTrainer<f64>;
pub type BeamHypothesis = qg_net::BeamHypothesis<f64>;

pub type Tensor32 = autodiff::Tensor<f32>;
pub type ParamSet32 = autodiff::ParamSet<f32>;
pub type Graph32<'p> = autodiff::Graph<'p, f32>;
pub type BigramLm32 = bigram_lm::BigramLm<f32>;
pub type DualModel32 = model::DualModel<f32>;
pub type DualTrainer32 = dual_trainer::DualTrainer<f32>;
pub type BeamHypothesis32 = qg_net::BeamHypothesis<f32>;
