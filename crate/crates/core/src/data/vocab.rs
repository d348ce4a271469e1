use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::scheme::{split_tag, Prefix};
use crate::data::Sentence;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Dense string index. Serialized as the id-ordered list of entries.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Index {
    entries: Vec<String>,
    ids: HashMap<String, usize>,
}

impl From<Vec<String>> for Index {
    fn from(entries: Vec<String>) -> Self {
        let ids = entries.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        Self { entries, ids }
    }
}

impl From<Index> for Vec<String> {
    fn from(index: Index) -> Self {
        index.entries
    }
}

impl Index {
    fn with_specials() -> Self {
        Self::from(vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()])
    }

    pub fn push(&mut self, entry: &str) -> usize {
        if let Some(&id) = self.ids.get(entry) {
            return id;
        }
        let id = self.entries.len();
        self.entries.push(entry.to_string());
        self.ids.insert(entry.to_string(), id);
        id
    }

    pub fn get(&self, entry: &str) -> Option<usize> {
        self.ids.get(entry).copied()
    }

    pub fn entry(&self, id: usize) -> &str {
        &self.entries[id]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    /// Lookup with [`UNK`] for unseen entries.
    pub fn lookup(&self, entry: &str) -> usize {
        self.get(entry).unwrap_or(UNK)
    }
}

/// Token, character, POS, relation and label indices.
///
/// Word, character, POS and relation indices reserve id 0 for padding and
/// id 1 for unknown entries. The label index holds only real labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub words: Index,
    pub chars: Index,
    pub pos: Index,
    pub deprels: Index,
    pub labels: Index,
}

impl Vocabulary {
    /// Case-sensitive word lookup with a lowercase fallback before UNK.
    pub fn word_id(&self, token: &str) -> usize {
        self.words
            .get(token)
            .or_else(|| self.words.get(&token.to_lowercase()))
            .unwrap_or(UNK)
    }

    pub fn char_ids(&self, token: &str) -> Vec<usize> {
        token.chars().map(|c| self.chars.lookup(c.encode_utf8(&mut [0; 4]))).collect()
    }

    pub fn pos_id(&self, tag: &str) -> usize {
        self.pos.lookup(tag)
    }

    pub fn deprel_id(&self, rel: &str) -> usize {
        self.deprels.lookup(rel)
    }

    pub fn label_id(&self, label: &str) -> Option<usize> {
        self.labels.get(label)
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    /// Entity types in label-vocabulary order.
    pub fn entity_types(&self) -> Vec<String> {
        let mut types: Vec<String> = Vec::new();
        for l in self.labels.entries() {
            if let Some((_, kind)) = split_tag(l) {
                if !kind.is_empty() && !types.iter().any(|t| t == kind) {
                    types.push(kind.to_string());
                }
            }
        }
        types
    }
}

/// Builds all indices from a training corpus. Words seen fewer than
/// `min_count` times are left out and map to UNK at lookup. The label index
/// is the full BIOES tag set over the entity types present in the corpus:
/// `O` followed by `B/I/E/S` for each type in sorted order.
pub fn build_vocab(corpus: &[Sentence], min_count: usize) -> Vocabulary {
    let mut counts: Vec<(String, usize)> = Vec::new();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut chars = Index::with_specials();
    let mut pos = Index::with_specials();
    let mut deprels = Index::with_specials();
    let mut types: Vec<String> = Vec::new();

    for s in corpus {
        for (i, token) in s.tokens.iter().enumerate() {
            match seen.get(token.as_str()) {
                Some(&k) => counts[k].1 += 1,
                None => {
                    seen.insert(token, counts.len());
                    counts.push((token.clone(), 1));
                }
            }
            for c in token.chars() {
                chars.push(c.encode_utf8(&mut [0; 4]));
            }
            pos.push(&s.pos_tags[i]);
            deprels.push(&s.deprels[i]);
            if let Some((prefix, kind)) = split_tag(&s.labels[i]) {
                if prefix != Prefix::O && !types.iter().any(|t| t == kind) {
                    types.push(kind.to_string());
                }
            }
        }
    }

    let mut words = Index::with_specials();
    for (token, count) in &counts {
        if *count >= min_count.max(1) {
            words.push(token);
        }
    }

    types.sort();
    let mut labels = Index::default();
    labels.push("O");
    for kind in &types {
        for prefix in ["B", "I", "E", "S"] {
            labels.push(&format!("{prefix}-{kind}"));
        }
    }

    Vocabulary {
        words,
        chars,
        pos,
        deprels,
        labels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentence(tokens: &[&str], labels: &[&str]) -> Sentence {
        let n = tokens.len();
        let mut heads = vec![1; n];
        heads[0] = 0;
        Sentence {
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            pos_tags: vec!["X".into(); n],
            heads,
            deprels: vec!["dep".into(); n],
            labels: labels.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn min_count_filters_rare_words() {
        let corpus = vec![sentence(&["a", "a", "b", "a"], &["O", "O", "O", "O"])];
        let v = build_vocab(&corpus, 2);
        assert_eq!(v.words.entries(), &[PAD_TOKEN, UNK_TOKEN, "a"]);
        assert_eq!(v.word_id("b"), UNK);
        let v = build_vocab(&corpus, 1);
        assert_eq!(v.words.entries(), &[PAD_TOKEN, UNK_TOKEN, "a", "b"]);
    }

    #[test]
    fn bioes_label_set_over_two_types() {
        let corpus = vec![sentence(&["x", "y", "z"], &["B-PER", "I-PER", "B-LOC"])];
        let v = build_vocab(&corpus, 1);
        assert_eq!(v.num_labels(), 4 * 2 + 1);
        assert_eq!(v.labels.entry(0), "O");
        assert_eq!(v.entity_types(), vec!["LOC", "PER"]);
    }

    #[test]
    fn special_ids_and_fallbacks() {
        let corpus = vec![sentence(&["the", "Cat"], &["O", "O"])];
        let v = build_vocab(&corpus, 1);
        assert_eq!(v.words.get(PAD_TOKEN), Some(PAD));
        assert_eq!(v.chars.get(PAD_TOKEN), Some(PAD));
        assert_eq!(v.chars.get(UNK_TOKEN), Some(UNK));
        assert_eq!(v.word_id("The"), v.word_id("the"));
        assert_eq!(v.word_id("cat"), UNK);
        assert_eq!(v.word_id("never-seen"), UNK);
        assert_eq!(v.pos_id("NN"), UNK);
        assert!(v.char_ids("q").iter().all(|&c| c == UNK));
    }

    #[test]
    fn ids_stable_across_serde() {
        let corpus = vec![sentence(&["x", "y", "z"], &["B-PER", "E-PER", "S-LOC"])];
        let v = build_vocab(&corpus, 1);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.word_id("y"), v.word_id("y"));
    }
}
