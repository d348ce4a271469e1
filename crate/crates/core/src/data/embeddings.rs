use std::collections::HashMap;
use std::path::Path;

use rand::Rng;

use crate::autodiff::Tensor;
use crate::data::vocab::{Vocabulary, PAD};
use crate::error::{Error, Result};

/// Uniform draw in `±sqrt(3 / dim)`, the policy for rows not covered by a
/// pretrained file and for randomly initialised tables.
pub fn init_row<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    let bound = (3.0 / dim.max(1) as f64).sqrt();
    (0..dim).map(|_| rng.gen_range(-bound..bound)).collect()
}

/// Parsed embedding file: token to vector.
#[derive(Debug, Clone)]
pub struct EmbeddingFile {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<f64>>,
}

pub fn read_embedding_file(path: impl AsRef<Path>) -> Result<EmbeddingFile> {
    parse_embeddings(&std::fs::read_to_string(path)?)
}

/// Parses `token v1 .. vD` lines, skipping an optional `count dim` header.
pub fn parse_embeddings(text: &str) -> Result<EmbeddingFile> {
    let mut dim: Option<usize> = None;
    let mut vectors = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if idx == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            continue;
        }
        let values: Vec<f64> = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("line {line_no}: {e}")))?;
        match dim {
            None if values.is_empty() => {
                return Err(Error::Format(format!("line {line_no}: no vector values")));
            }
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::Format(format!(
                    "line {line_no}: expected {d} values, found {}",
                    values.len()
                )));
            }
            Some(_) => {}
        }
        vectors.entry(fields[0].to_string()).or_insert(values);
    }
    Ok(EmbeddingFile {
        dim: dim.unwrap_or(0),
        vectors,
    })
}

/// Word table for `vocab`: file rows where available (exact token, then
/// lowercase), `init_row` otherwise, and a zero PAD row.
pub fn embedding_matrix<R: Rng>(file: &EmbeddingFile, vocab: &Vocabulary, rng: &mut R) -> Tensor {
    let dim = file.dim;
    let mut data = Vec::with_capacity(vocab.words.len() * dim);
    for (id, word) in vocab.words.entries().iter().enumerate() {
        let row = if id == PAD {
            vec![0.0; dim]
        } else {
            // Drawn for every non-PAD row so the stream does not depend on coverage.
            let random = init_row(rng, dim);
            file.vectors
                .get(word)
                .or_else(|| file.vectors.get(&word.to_lowercase()))
                .cloned()
                .unwrap_or(random)
        };
        data.extend(row);
    }
    Tensor::matrix(vocab.words.len(), dim, data).expect("rows have the file dimension")
}

pub fn load_embeddings<R: Rng>(path: impl AsRef<Path>, vocab: &Vocabulary, rng: &mut R) -> Result<Tensor> {
    let file = read_embedding_file(path)?;
    Ok(embedding_matrix(&file, vocab, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_vocab, Sentence};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vocab(words: &[&str]) -> Vocabulary {
        let n = words.len();
        let mut heads = vec![1; n];
        heads[0] = 0;
        build_vocab(
            &[Sentence {
                tokens: words.iter().map(|s| s.to_string()).collect(),
                pos_tags: vec!["X".into(); n],
                heads,
                deprels: vec!["dep".into(); n],
                labels: vec!["O".into(); n],
            }],
            1,
        )
    }

    #[test]
    fn copies_rows_for_known_tokens() {
        let v = vocab(&["the", "cat"]);
        let file = parse_embeddings("the 0.1 0.2\n").unwrap();
        let m = embedding_matrix(&file, &v, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(m.row(v.word_id("the")), &[0.1, 0.2]);
        assert_eq!(m.row(PAD), &[0.0, 0.0]);
    }

    #[test]
    fn missing_rows_are_seeded() {
        let v = vocab(&["the", "cat"]);
        let file = parse_embeddings("the 0.1 0.2\n").unwrap();
        let a = embedding_matrix(&file, &v, &mut ChaCha8Rng::seed_from_u64(3));
        let b = embedding_matrix(&file, &v, &mut ChaCha8Rng::seed_from_u64(3));
        let cat = v.word_id("cat");
        assert_eq!(a.row(cat), b.row(cat));
        assert!(a.row(cat).iter().all(|x| x.abs() <= (1.5f64).sqrt()));
    }

    #[test]
    fn header_skipped_and_dimension_enforced() {
        let file = parse_embeddings("2 3\na 1 2 3\nb 4 5 6\n").unwrap();
        assert_eq!(file.dim, 3);
        assert_eq!(file.vectors.len(), 2);
        match parse_embeddings("a 1 2 3\nb 4 5\n") {
            Err(Error::Format(msg)) => assert!(msg.contains("line 2"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hundred_dimensional_file() {
        let row: Vec<String> = (0..100).map(|i| format!("{}", i as f64 / 100.0)).collect();
        let text = format!("the {}\nof {}\n", row.join(" "), row.join(" "));
        let file = parse_embeddings(&text).unwrap();
        assert_eq!(file.dim, 100);
        let v = vocab(&["the"]);
        let m = embedding_matrix(&file, &v, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(m.dims2(), (v.words.len(), 100));
    }
}
