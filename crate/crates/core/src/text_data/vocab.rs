use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const SOS: usize = 2;
pub const EOS: usize = 3;
pub const NUM_RESERVED: usize = 4;

const RESERVED: [&str; NUM_RESERVED] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Dense token ↔ id mapping with four reserved ids in front.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
    max_size: usize,
}

impl Vocabulary {
    /// Builds a vocabulary from non-reserved tokens in id order (first token gets id 4).
    pub fn from_tokens(tokens: Vec<String>, max_size: usize) -> Result<Self> {
        if max_size == 0 {
            return Err(Error::InvalidArgument("vocabulary max_size must be ≥ 1".into()));
        }
        if tokens.len() > max_size {
            return Err(Error::InvalidArgument(format!(
                "{} tokens exceed max_size {max_size}",
                tokens.len()
            )));
        }
        let mut id_to_token: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(tokens);
        let mut token_to_id = HashMap::with_capacity(id_to_token.len());
        for (i, t) in id_to_token.iter().enumerate() {
            if token_to_id.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary {
            token_to_id,
            id_to_token,
            max_size,
        })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    /// Non-reserved tokens in id order.
    pub fn words(&self) -> &[String] {
        &self.id_to_token[NUM_RESERVED..]
    }

    /// Maps tokens to ids, unknown tokens to [`UNK`].
    pub fn encode<T: AsRef<str>>(&self, tokens: &[T]) -> Result<Vec<usize>> {
        if tokens.is_empty() {
            return Err(Error::EmptySequence);
        }
        Ok(tokens
            .iter()
            .map(|t| self.id(t.as_ref()).unwrap_or(UNK))
            .collect())
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or(RESERVED[UNK]).to_string())
            .collect()
    }

    /// One non-reserved token per line; line `n` (0-based) holds id `n + 4`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for w in self.words() {
            out.push_str(w);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, max_size: usize) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocabulary::from_tokens(text.lines().map(String::from).collect(), max_size)
    }
}

/// Keeps the `max_size` most frequent tokens; ties go to the lexicographically smaller token.
pub fn build_vocab<T: AsRef<str>>(corpus: &[Vec<T>], max_size: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("cannot build a vocabulary from an empty corpus".into()));
    }
    if max_size == 0 {
        return Err(Error::InvalidArgument("vocabulary max_size must be ≥ 1".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for sentence in corpus {
        for t in sentence {
            let t = t.as_ref();
            if !RESERVED.contains(&t) {
                *counts.entry(t).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_size);
    Vocabulary::from_tokens(ranked.into_iter().map(|(t, _)| t.to_string()).collect(), max_size)
}
