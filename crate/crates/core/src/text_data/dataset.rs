use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::tokenize;
use crate::error::{Error, Result};

/// One question / candidate-answer row.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct QAPair {
    pub question_id: String,
    pub question_tokens: Vec<String>,
    pub answer_tokens: Vec<String>,
    pub passage_id: String,
    pub label: u8,
}

impl QAPair {
    pub fn new(
        question_id: impl Into<String>,
        question_tokens: Vec<String>,
        answer_tokens: Vec<String>,
        passage_id: impl Into<String>,
        label: u8,
    ) -> Result<Self> {
        if question_tokens.is_empty() || answer_tokens.is_empty() {
            return Err(Error::EmptySequence);
        }
        if label > 1 {
            return Err(Error::InvalidArgument(format!("label must be 0 or 1, got {label}")));
        }
        Ok(QAPair {
            question_id: question_id.into(),
            question_tokens,
            answer_tokens,
            passage_id: passage_id.into(),
            label,
        })
    }

    pub fn is_positive(&self) -> bool {
        self.label == 1
    }
}

/// Parses `question_id \t passage_id \t question \t answer \t label` rows, no header.
pub fn parse_tsv(text: &str, path: &Path) -> Result<Vec<QAPair>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let cols: Vec<&str> = raw.split('\t').collect();
        if cols.len() != 5 {
            return Err(err(line, format!("expected 5 tab-separated columns, found {}", cols.len())));
        }
        let label = match cols[4].trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(err(line, format!("label must be 0 or 1, found {other:?}"))),
        };
        let question = tokenize(cols[2]).map_err(|e| err(line, format!("question: {e}")))?;
        let answer = tokenize(cols[3]).map_err(|e| err(line, format!("answer: {e}")))?;
        pairs.push(QAPair::new(cols[0], question, answer, cols[1], label)?);
    }
    Ok(pairs)
}

pub fn load_tsv(path: &Path) -> Result<Vec<QAPair>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tsv(&text, path)
}

/// Writes pairs in the format read by [`load_tsv`], tokens joined by single spaces.
pub fn write_tsv(path: &Path, pairs: &[QAPair]) -> Result<()> {
    let mut out = String::new();
    for p in pairs {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            p.question_id,
            p.passage_id,
            p.question_tokens.join(" "),
            p.answer_tokens.join(" "),
            p.label
        );
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
