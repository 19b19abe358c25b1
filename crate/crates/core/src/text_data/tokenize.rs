use std::collections::HashSet;

use crate::error::{Error, Result};

/// Lowercases, splits on whitespace and emits every non-alphanumeric character as its own token.
pub fn tokenize(text: &str) -> Result<Vec<String>> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_whitespace() {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
        } else if c.is_alphanumeric() {
            word.extend(c.to_lowercase());
        } else {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            tokens.push(c.to_lowercase().collect());
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    if tokens.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok(tokens)
}

/// Number of distinct token types shared by question and answer, clipped to `cooc_vocab - 1`.
pub fn cooccurrence_bucket<T: AsRef<str>>(question: &[T], answer: &[T], cooc_vocab: usize) -> usize {
    let q: HashSet<&str> = question.iter().map(AsRef::as_ref).collect();
    let a: HashSet<&str> = answer.iter().map(AsRef::as_ref).collect();
    q.intersection(&a).count().min(cooc_vocab.saturating_sub(1))
}

/// [`cooccurrence_bucket`] with the ten-entry co-occurrence table, so the result is in `0..=9`.
pub fn cooccurrence_count<T: AsRef<str>>(question: &[T], answer: &[T]) -> usize {
    cooccurrence_bucket(question, answer, 10)
}
