use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::scheme::detect_scheme;
use crate::error::{Error, Result};

/// One dependency-annotated, NER-labelled sentence.
///
/// `heads[i]` is the 1-based index of token `i`'s head, `0` for the root.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub pos_tags: Vec<String>,
    pub heads: Vec<usize>,
    pub deprels: Vec<String>,
    pub labels: Vec<String>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Checks list lengths, the head tree and the label encoding.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let n = self.tokens.len();
        if n == 0 {
            return Err("sentence has no tokens".into());
        }
        for (name, len) in [
            ("pos_tags", self.pos_tags.len()),
            ("heads", self.heads.len()),
            ("deprels", self.deprels.len()),
            ("labels", self.labels.len()),
        ] {
            if len != n {
                return Err(format!("{name} has {len} entries for {n} tokens"));
            }
        }
        validate_heads(&self.heads)?;
        if detect_scheme(&self.labels).is_none() {
            return Err(format!("labels {:?} are not a valid BIO or BIOES encoding", self.labels));
        }
        Ok(())
    }
}

/// Exactly one root, no self-heads, heads in range and no cycles.
pub fn validate_heads(heads: &[usize]) -> std::result::Result<(), String> {
    let n = heads.len();
    let mut roots = 0;
    for (i, &h) in heads.iter().enumerate() {
        if h > n {
            return Err(format!("token {} has head {h} outside 0..={n}", i + 1));
        }
        if h == i + 1 {
            return Err(format!("token {} is its own head", i + 1));
        }
        if h == 0 {
            roots += 1;
        }
    }
    if roots != 1 {
        return Err(format!("expected exactly one root, found {roots}"));
    }
    // Walk up from every token; a walk longer than n steps means a cycle.
    for start in 0..n {
        let mut node = start + 1;
        let mut steps = 0;
        while node != 0 {
            node = heads[node - 1];
            steps += 1;
            if steps > n {
                return Err(format!("cycle through token {}", start + 1));
            }
        }
    }
    Ok(())
}

pub fn parse_corpus(path: impl AsRef<Path>) -> Result<Vec<Sentence>> {
    let text = std::fs::read_to_string(path)?;
    parse_corpus_str(&text)
}

/// Parses the six-column TSV corpus format. Blank lines end sentences and
/// `#` lines are comments.
pub fn parse_corpus_str(text: &str) -> Result<Vec<Sentence>> {
    let mut corpus = Vec::new();
    let mut current = empty_sentence();
    let mut first_line = 0;

    let finish = |s: &mut Sentence, first_line: usize, corpus: &mut Vec<Sentence>| -> Result<()> {
        if s.is_empty() {
            return Ok(());
        }
        let sentence = std::mem::replace(s, empty_sentence());
        if let Err(message) = validate_heads(&sentence.heads) {
            return Err(Error::TreeValidation {
                sentence: corpus.len(),
                message,
            });
        }
        if let Err(message) = sentence.validate() {
            return Err(Error::Parse {
                line: first_line,
                message: format!("sentence {}: {message}", corpus.len()),
            });
        }
        corpus.push(sentence);
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            finish(&mut current, first_line, &mut corpus)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 6 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 6 tab-separated columns, found {}", cols.len()),
            });
        }
        let index: usize = cols[0].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad token index {:?}", cols[0]),
        })?;
        if index != current.len() + 1 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("token index {index}, expected {}", current.len() + 1),
            });
        }
        let head: usize = cols[3].parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad head {:?}", cols[3]),
        })?;
        if cols[1].is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty token form".into(),
            });
        }
        if current.is_empty() {
            first_line = line_no;
        }
        current.tokens.push(cols[1].to_string());
        current.pos_tags.push(cols[2].to_string());
        current.heads.push(head);
        current.deprels.push(cols[4].to_string());
        current.labels.push(cols[5].to_string());
    }
    finish(&mut current, first_line, &mut corpus)?;
    Ok(corpus)
}

fn empty_sentence() -> Sentence {
    Sentence {
        tokens: Vec::new(),
        pos_tags: Vec::new(),
        heads: Vec::new(),
        deprels: Vec::new(),
        labels: Vec::new(),
    }
}

pub fn serialize_corpus(corpus: &[Sentence]) -> String {
    let mut out = String::new();
    for (k, s) in corpus.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        for i in 0..s.len() {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                i + 1,
                s.tokens[i],
                s.pos_tags[i],
                s.heads[i],
                s.deprels[i],
                s.labels[i]
            );
        }
    }
    out
}

pub fn write_corpus(path: impl AsRef<Path>, corpus: &[Sentence]) -> Result<()> {
    std::fs::write(path, serialize_corpus(corpus))?;
    Ok(())
}
