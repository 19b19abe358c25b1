//! Binary checkpoint: magic, tensors, vocabularies, LM counts, config JSON.
//!
//! All integers are little-endian; lengths and counts are `u32`, dimensions and word counts
//! `u64`, tensor values `f64`.

use std::fs;
use std::path::Path;

use crate::autodiff::{ParamSet, Tensor};
use crate::bigram_lm::{BigramCounts, BigramLm};
use crate::error::{Error, Result};
use crate::model::DualModel;
use crate::nn::ModelDims;
use crate::scalar::Scalar;
use crate::text_data::{Vocabulary, NUM_RESERVED};

pub const CHECKPOINT_MAGIC: &[u8; 7] = b"DUALQA1";
const MAGIC_STEM: &[u8] = b"DUALQA";

/// Everything a checkpoint file holds.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<S> {
    pub params: ParamSet<S>,
    pub question_vocab: Vocabulary,
    pub answer_vocab: Vocabulary,
    pub question_lm: BigramLm<S>,
    pub answer_lm: BigramLm<S>,
    pub config: serde_json::Value,
}

impl<S: Scalar> Checkpoint<S> {
    /// Rebuilds the model for `dims`; fails if any stored tensor has a different shape.
    pub fn into_model(self, dims: ModelDims) -> Result<(DualModel<S>, BigramLm<S>, BigramLm<S>)> {
        let mut model = DualModel::new(dims, self.question_vocab, self.answer_vocab, 0)?;
        model.load_params(&self.params)?;
        Ok((model, self.question_lm, self.answer_lm))
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{v} does not fit in u32")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) -> Result<()> {
        self.u32(s.len())?;
        self.0.extend_from_slice(s.as_bytes());
        Ok(())
    }

    fn strings(&mut self, items: &[String]) -> Result<()> {
        self.u32(items.len())?;
        items.iter().try_for_each(|s| self.str(s))
    }

    fn vocab(&mut self, v: &Vocabulary) -> Result<()> {
        self.u64(v.max_size() as u64);
        self.strings(v.words())
    }

    fn lm<S: Scalar>(&mut self, lm: &BigramLm<S>) -> Result<()> {
        let counts = lm.counts();
        self.f64(lm.alpha().to_f64_lossless());
        self.strings(&counts.vocab)?;
        self.u32(counts.contexts.len())?;
        for (h, c) in &counts.contexts {
            self.str(h)?;
            self.u64(*c);
        }
        self.u32(counts.bigrams.len())?;
        for (h, w, c) in &counts.bigrams {
            self.str(h)?;
            self.str(w)?;
            self.u64(*c);
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated file: needed {n} bytes at offset {}", self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u32()?;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Checkpoint("invalid UTF-8 string".into()))
    }

    fn strings(&mut self) -> Result<Vec<String>> {
        let n = self.u32()?;
        (0..n).map(|_| self.str()).collect()
    }

    fn vocab(&mut self) -> Result<Vocabulary> {
        let max_size = usize::try_from(self.u64()?)
            .map_err(|_| Error::Checkpoint("vocabulary size overflows".into()))?;
        let words = self.strings()?;
        Vocabulary::from_tokens(words, max_size).map_err(|e| Error::Checkpoint(format!("vocabulary: {e}")))
    }

    fn lm<S: Scalar>(&mut self) -> Result<BigramLm<S>> {
        let alpha = S::from_f64_lossy(self.f64()?);
        let vocab = self.strings()?;
        let n = self.u32()?;
        let contexts = (0..n)
            .map(|_| Ok((self.str()?, self.u64()?)))
            .collect::<Result<Vec<_>>>()?;
        let n = self.u32()?;
        let bigrams = (0..n)
            .map(|_| Ok((self.str()?, self.str()?, self.u64()?)))
            .collect::<Result<Vec<_>>>()?;
        BigramLm::from_counts(
            BigramCounts {
                vocab,
                contexts,
                bigrams,
            },
            alpha,
        )
    }
}

/// Writes the checkpoint through a temporary file and a rename, so readers never see a partial file.
pub fn save_checkpoint<S: Scalar>(
    path: &Path,
    model: &DualModel<S>,
    question_lm: &BigramLm<S>,
    answer_lm: &BigramLm<S>,
    config: &serde_json::Value,
) -> Result<()> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(CHECKPOINT_MAGIC);
    w.u32(model.params.len())?;
    for (_, name, t) in model.params.iter() {
        w.str(name)?;
        w.u32(t.rank())?;
        t.shape().iter().for_each(|&d| w.u64(d as u64));
        t.data().iter().for_each(|&v| w.f64(v.to_f64_lossless()));
    }
    w.vocab(&model.question_vocab)?;
    w.vocab(&model.answer_vocab)?;
    w.lm(question_lm)?;
    w.lm(answer_lm)?;
    let json = serde_json::to_string(config).map_err(|e| Error::Checkpoint(e.to_string()))?;
    w.str(&json)?;

    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &w.0).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<Checkpoint<S>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

fn decode<S: Scalar>(bytes: &[u8]) -> Result<Checkpoint<S>> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(CHECKPOINT_MAGIC.len())?;
    if magic != CHECKPOINT_MAGIC {
        if magic.starts_with(MAGIC_STEM) {
            return Err(Error::CheckpointVersion {
                expected: String::from_utf8_lossy(CHECKPOINT_MAGIC).into_owned(),
                found: String::from_utf8_lossy(magic).into_owned(),
            });
        }
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let mut params = ParamSet::new();
    for _ in 0..r.u32()? {
        let name = r.str()?;
        let rank = r.u32()?;
        let shape = (0..rank)
            .map(|_| {
                usize::try_from(r.u64()?).map_err(|_| Error::Checkpoint("dimension overflows".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        let len = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n <= (bytes.len() - r.pos) / 8)
            .ok_or_else(|| Error::Checkpoint(format!("truncated file: tensor {name} {shape:?}")))?;
        let data = (0..len)
            .map(|_| r.f64().map(S::from_f64_lossy))
            .collect::<Result<Vec<_>>>()?;
        let t = Tensor::new(shape, data).map_err(|e| Error::Checkpoint(format!("tensor {name}: {e}")))?;
        params
            .insert(name, t)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
    }
    let question_vocab = r.vocab()?;
    let answer_vocab = r.vocab()?;
    let question_lm = r.lm()?;
    let answer_lm = r.lm()?;
    let json = r.str()?;
    let config = serde_json::from_str(&json).map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    debug_assert!(question_vocab.len() >= NUM_RESERVED);
    Ok(Checkpoint {
        params,
        question_vocab,
        answer_vocab,
        question_lm,
        answer_lm,
        config,
    })
}
