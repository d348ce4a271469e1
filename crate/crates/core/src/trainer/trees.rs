use std::collections::{BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Sentence;

/// Decodes a Prüfer sequence over nodes `0..seq.len() + 2` into its edges.
pub fn prufer_edges(seq: &[usize]) -> Vec<(usize, usize)> {
    let n = seq.len() + 2;
    let mut degree = vec![1usize; n];
    for &v in seq {
        degree[v] += 1;
    }
    let mut leaves: BTreeSet<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    let mut edges = Vec::with_capacity(n - 1);
    for &v in seq {
        let leaf = *leaves.iter().next().expect("a tree always has a leaf");
        leaves.remove(&leaf);
        edges.push((leaf, v));
        degree[v] -= 1;
        if degree[v] == 1 {
            leaves.insert(v);
        }
    }
    let last: Vec<usize> = leaves.into_iter().collect();
    edges.push((last[0], last[1]));
    edges
}

/// Uniform labelled rooted tree on `n` nodes as 1-based heads (0 = root):
/// a uniform Prüfer sequence fixes the unrooted tree and the root is drawn
/// uniformly, so each of the `n^(n-1)` rooted trees is equally likely.
pub fn random_tree<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    match n {
        0 => return Vec::new(),
        1 => return vec![0],
        _ => {}
    }
    let edges = if n == 2 {
        vec![(0, 1)]
    } else {
        let seq: Vec<usize> = (0..n - 2).map(|_| rng.gen_range(0..n)).collect();
        prufer_edges(&seq)
    };
    let root = rng.gen_range(0..n);
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in &edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut heads = vec![usize::MAX; n];
    heads[root] = 0;
    let mut queue = VecDeque::from([root]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if heads[v] == usize::MAX {
                heads[v] = u + 1;
                queue.push_back(v);
            }
        }
    }
    heads
}

/// Replaces every sentence's tree with a uniform random rooted tree and its
/// relations with uniform draws from the corpus relation set.
pub fn randomize_trees(corpus: &[Sentence], seed: u64) -> Vec<Sentence> {
    let relations: Vec<String> = corpus
        .iter()
        .flat_map(|s| s.deprels.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    corpus
        .iter()
        .map(|s| {
            let mut out = s.clone();
            out.heads = random_tree(s.len(), &mut rng);
            out.deprels = (0..s.len())
                .map(|_| relations[rng.gen_range(0..relations.len())].clone())
                .collect();
            out
        })
        .collect()
}
