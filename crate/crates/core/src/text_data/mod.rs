//! Tokenization, vocabularies, dataset files and the minibatch pipeline.

mod batching;
mod dataset;
mod tokenize;
mod vocab;

pub use batching::{make_batches, TrainingBatch};
pub use dataset::{load_tsv, parse_tsv, write_tsv, QAPair};
pub use tokenize::{cooccurrence_bucket, cooccurrence_count, tokenize};
pub use vocab::{build_vocab, Vocabulary, EOS, NUM_RESERVED, PAD, SOS, UNK};
