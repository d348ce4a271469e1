//! Synthetic corpus whose entity types are recoverable only through the
//! dependency tree.
//!
//! Every sentence holds two ambiguous tokens (`pcp`, `dmt`, ...). Each one
//! hangs two hops below a cue verb (`ambiguous -> link -> cue`) whose
//! class decides the type: drug-use cues make it `DRUG`, business cues make
//! it `ORG`. The two cue verbs are joined (`cue2 -> cue1`), so the other
//! cue is always at least three hops away. Token order is a random
//! permutation, so linear distance says nothing about which cue governs
//! which token; when the two cues disagree only the tree resolves them.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Sentence;

pub const AMBIGUOUS: [&str; 4] = ["pcp", "dmt", "mdma", "ghb"];
pub const DRUG_CUES: [&str; 4] = ["smoked", "injected", "snorted", "swallowed"];
pub const ORG_CUES: [&str; 4] = ["founded", "audited", "acquired", "sued"];
const LINKS: [&str; 4] = ["of", "with", "from", "about"];
const NAMES: [&str; 4] = ["alice", "bruno", "chen", "dana"];
const FILLERS: [&str; 16] = [
    "the", "a", "report", "city", "said", "new", "old", "yesterday", "police", "group", "then", "local", "many", "after",
    "week", "news",
];

/// Parameters of [`make_synthetic`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub sentences: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(sentences: usize, seed: u64) -> Self {
        Self { sentences, min_len: 8, max_len: 20, seed }
    }
}

struct Node {
    token: String,
    pos: &'static str,
    head: Option<usize>,
    deprel: &'static str,
    label: String,
}

fn sentence<R: Rng>(rng: &mut R, min_len: usize, max_len: usize) -> Sentence {
    let mut nodes: Vec<Node> = Vec::new();
    let push = |nodes: &mut Vec<Node>, token: &str, pos, head, deprel, label: &str| {
        nodes.push(Node { token: token.to_string(), pos, head, deprel, label: label.to_string() });
        nodes.len() - 1
    };
    let drug_cue: [bool; 2] = [rng.gen(), rng.gen()];
    let cue_word = |rng: &mut R, drug: bool| {
        let set = if drug { DRUG_CUES } else { ORG_CUES };
        set[rng.gen_range(0..set.len())]
    };
    let w1 = cue_word(rng, drug_cue[0]);
    let cue1 = push(&mut nodes, w1, "VB", None, "root", "O");
    let w2 = cue_word(rng, drug_cue[1]);
    let cue2 = push(&mut nodes, w2, "VB", Some(cue1), "conj", "O");
    for (cue, drug) in [(cue1, drug_cue[0]), (cue2, drug_cue[1])] {
        let link = LINKS[rng.gen_range(0..LINKS.len())];
        let mid = push(&mut nodes, link, "IN", Some(cue), "prep", "O");
        let word = AMBIGUOUS[rng.gen_range(0..AMBIGUOUS.len())];
        let label = if drug { "S-DRUG" } else { "S-ORG" };
        push(&mut nodes, word, "NN", Some(mid), "pobj", label);
    }
    if rng.gen_bool(0.5) {
        let name = NAMES[rng.gen_range(0..NAMES.len())];
        let head = [cue1, cue2][rng.gen_range(0..2)];
        push(&mut nodes, name, "NNP", Some(head), "nsubj", "S-PER");
    }
    let target = rng.gen_range(min_len.max(nodes.len())..=max_len.max(nodes.len()));
    while nodes.len() < target {
        let word = FILLERS[rng.gen_range(0..FILLERS.len())];
        let head = rng.gen_range(0..nodes.len());
        push(&mut nodes, word, "DT", Some(head), "dep", "O");
    }
    // Random linear order.
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.shuffle(rng);
    let mut position = vec![0; nodes.len()];
    for (p, &node) in order.iter().enumerate() {
        position[node] = p;
    }
    let n = nodes.len();
    let mut s = Sentence {
        tokens: vec![String::new(); n],
        pos_tags: vec![String::new(); n],
        heads: vec![0; n],
        deprels: vec![String::new(); n],
        labels: vec![String::new(); n],
    };
    for (i, node) in nodes.into_iter().enumerate() {
        let p = position[i];
        s.tokens[p] = node.token;
        s.pos_tags[p] = node.pos.to_string();
        s.heads[p] = node.head.map_or(0, |h| position[h] + 1);
        s.deprels[p] = node.deprel.to_string();
        s.labels[p] = node.label;
    }
    s
}

/// Generates `spec.sentences` sentences, deterministically from the seed.
pub fn make_synthetic(spec: SyntheticSpec) -> Vec<Sentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.sentences).map(|_| sentence(&mut rng, spec.min_len, spec.max_len)).collect()
}
