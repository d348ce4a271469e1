use std::fmt::{self, Write};
use std::str::FromStr;

use crate::cell::Gate;
use crate::data::Sentence;
use crate::error::{Error, Result};
use crate::eval::gates::{collect_traces, mean_gate};
use crate::eval::metrics::{evaluate, EvalReport};
use crate::trainer::{apply_tree_source, train, Checkpoint, GraphInput, ModelConfig, TreeSource};

/// Seed for one use of a run seed, so that the streams of different uses
/// never coincide.
pub fn derive_seed(seed: u64, purpose: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(purpose.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Contiguous 4:1:1 train/dev/test split.
pub fn split_corpus(corpus: &[Sentence]) -> Result<(Vec<Sentence>, Vec<Sentence>, Vec<Sentence>)> {
    let n = corpus.len();
    if n < 3 {
        return Err(Error::contract(format!("need at least 3 sentences to split, got {n}")));
    }
    let dev_len = (n / 6).max(1);
    let test_len = (n / 6).max(1);
    let train_len = n - dev_len - test_len;
    Ok((
        corpus[..train_len].to_vec(),
        corpus[train_len..train_len + dev_len].to_vec(),
        corpus[train_len + dev_len..].to_vec(),
    ))
}

/// A checkpoint trained under one tree source plus the evaluation corpus
/// carrying that source's trees.
#[derive(Debug, Clone)]
pub struct SourceRun<'a> {
    pub source: TreeSource,
    pub checkpoint: Option<&'a Checkpoint>,
    pub corpus: Vec<Sentence>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceResult {
    pub source: TreeSource,
    pub f1: f64,
    /// Mean `m` gate value; `None` for models without the gate.
    pub mean_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeComparison {
    pub results: Vec<SourceResult>,
    /// `(a, b, F1(a) - F1(b))` for every ordered pair `a` before `b`.
    pub deltas: Vec<(TreeSource, TreeSource, f64)>,
}

impl TreeComparison {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            let m = r.mean_m.map_or("n/a".to_string(), |m| format!("{m:.4}"));
            let _ = writeln!(out, "source {:<12} F1={:.4} mean_m={m}", r.source.to_string(), r.f1);
        }
        for (a, b, d) in &self.deltas {
            let _ = writeln!(out, "delta {a} - {b} = {d:+.4}");
        }
        out
    }
}

/// Scores each run on its own corpus and reports pairwise F1 deltas.
pub fn compare_tree_sources(runs: &[SourceRun<'_>]) -> Result<TreeComparison> {
    let mut results = Vec::with_capacity(runs.len());
    for run in runs {
        let ckpt = run
            .checkpoint
            .ok_or_else(|| Error::contract(format!("no checkpoint for tree source {}", run.source)))?;
        let f1 = evaluate(&ckpt.model, &run.corpus)?.overall.f1;
        let traces = collect_traces(&ckpt.model, &run.corpus)?;
        results.push(SourceResult { source: run.source.clone(), f1, mean_m: mean_gate(&traces, Gate::M) });
    }
    let mut deltas = Vec::new();
    for i in 0..results.len() {
        for j in i + 1..results.len() {
            deltas.push((results[i].source.clone(), results[j].source.clone(), results[i].f1 - results[j].f1));
        }
    }
    Ok(TreeComparison { results, deltas })
}

/// Trains one model per tree source on the 4:1:1 split of `corpus` and
/// compares them on their test parts.
pub fn run_tree_comparison(config: &ModelConfig, corpus: &[Sentence], sources: &[TreeSource]) -> Result<(TreeComparison, Vec<Checkpoint>)> {
    let mut tests = Vec::with_capacity(sources.len());
    let mut checkpoints = Vec::with_capacity(sources.len());
    for source in sources {
        let with_trees = apply_tree_source(corpus, source, derive_seed(config.seed, 1))?;
        let (tr, dev, test) = split_corpus(&with_trees)?;
        let cfg = ModelConfig { tree_source: source.clone(), ..config.clone() };
        checkpoints.push(train(&cfg, &tr, &dev)?);
        tests.push(test);
    }
    let runs: Vec<SourceRun<'_>> = sources
        .iter()
        .zip(&checkpoints)
        .zip(tests)
        .map(|((source, ckpt), corpus)| SourceRun { source: source.clone(), checkpoint: Some(ckpt), corpus })
        .collect();
    let comparison = compare_tree_sources(&runs)?;
    Ok((comparison, checkpoints))
}

/// Model components that an ablation removes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    GcnOneLayer,
    GcnAll,
    DeprelEmbedding,
    PosEmbedding,
    OriginalDependency,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::GcnOneLayer,
        Ablation::GcnAll,
        Ablation::DeprelEmbedding,
        Ablation::PosEmbedding,
        Ablation::OriginalDependency,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::GcnOneLayer => "gcn-1-layer",
            Ablation::GcnAll => "gcn-all",
            Ablation::DeprelEmbedding => "deprel-embedding",
            Ablation::PosEmbedding => "pos-embedding",
            Ablation::OriginalDependency => "original-dependency",
        }
    }

    /// The reduced configuration. Dropping the original dependencies
    /// swaps in random trees.
    pub fn apply(self, config: &ModelConfig) -> ModelConfig {
        let mut c = config.clone();
        match self {
            Ablation::GcnOneLayer => c.gcn_layers = 1,
            Ablation::GcnAll => c.graph_input = GraphInput::Zero,
            Ablation::DeprelEmbedding => c.use_deprel = false,
            Ablation::PosEmbedding => c.use_pos = false,
            Ablation::OriginalDependency => c.tree_source = TreeSource::Random,
        }
        c
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::contract(format!("unknown ablation {s}")))
    }
}

/// Trains the model described by `config` (reduced by `drop`, if any) on
/// the 4:1:1 split of `corpus` and reports test scores.
pub fn ablation_run(config: &ModelConfig, corpus: &[Sentence], drop: Option<Ablation>) -> Result<(EvalReport, Checkpoint)> {
    let cfg = drop.map_or_else(|| config.clone(), |d| d.apply(config));
    let with_trees = apply_tree_source(corpus, &cfg.tree_source, derive_seed(cfg.seed, 1))?;
    let (tr, dev, test) = split_corpus(&with_trees)?;
    let ckpt = train(&cfg, &tr, &dev)?;
    let report = evaluate(&ckpt.model, &test)?;
    Ok((report, ckpt))
}
