//! Entity-level scoring and the analysis battery: gate histograms,
//! length breakdowns, tree-source comparisons, ablations and a paired
//! bootstrap test.

mod bootstrap;
mod experiments;
mod gates;
mod metrics;

pub use bootstrap::bootstrap_test;
pub use experiments::{
    ablation_run, compare_tree_sources, derive_seed, run_tree_comparison, split_corpus, Ablation, SourceResult, SourceRun,
    TreeComparison,
};
pub use gates::{collect_traces, gate_bucket, gate_histogram, mean_gate, GateHistogram, GATE_EDGES};
pub use metrics::{
    decode_spans, entity_f1, evaluate, predict_corpus, report_from_spans, spans_for, EvalReport, Prf, ENTITY_LENGTH_BUCKETS,
    SENTENCE_LENGTH_BUCKETS,
};
