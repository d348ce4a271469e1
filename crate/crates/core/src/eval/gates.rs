use std::fmt::Write;

use crate::cell::{Gate, GateTrace};
use crate::data::Sentence;
use crate::error::{Error, Result};
use crate::trainer::Model;

/// Bucket edges; every bucket is `[lo, hi)` except the last, `[0.9, 1.0]`.
pub const GATE_EDGES: [f64; 8] = [0.0, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// Counts of gate values per bucket, one count per hidden unit per token
/// per direction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateHistogram {
    pub gate: Gate,
    pub counts: [usize; 7],
}

pub fn gate_bucket(v: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::DataIntegrity(format!("gate value {v} outside [0, 1]")));
    }
    Ok(GATE_EDGES[1..7].iter().take_while(|&&edge| v >= edge).count())
}

impl GateHistogram {
    pub fn new(gate: Gate) -> Self {
        Self { gate, counts: [0; 7] }
    }

    pub fn add_values(&mut self, values: impl IntoIterator<Item = f64>) -> Result<()> {
        for v in values {
            self.counts[gate_bucket(v)?] += 1;
        }
        Ok(())
    }

    pub fn add_trace(&mut self, trace: &GateTrace) -> Result<()> {
        self.add_values(trace.values(self.gate))
    }

    pub fn merge(&mut self, other: &GateHistogram) {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bucket_low,bucket_high,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{},{c}", GATE_EDGES[k], GATE_EDGES[k + 1]);
        }
        out
    }
}

/// Histogram of `gate` over all traces.
pub fn gate_histogram<'a>(traces: impl IntoIterator<Item = &'a GateTrace>, gate: Gate) -> Result<GateHistogram> {
    let mut h = GateHistogram::new(gate);
    let mut any = false;
    for t in traces {
        any |= !t.steps.is_empty();
        h.add_trace(t)?;
    }
    if !any {
        return Err(Error::contract("no gate values to histogram (is the model a Syn-LSTM?)"));
    }
    Ok(h)
}

/// Evaluation-mode gate traces of every sentence.
pub fn collect_traces(model: &Model, corpus: &[Sentence]) -> Result<Vec<GateTrace>> {
    corpus.iter().map(|s| Ok(model.forward_sentence(s)?.1)).collect()
}

/// Mean of all recorded values of `gate`; `None` without any.
pub fn mean_gate(traces: &[GateTrace], gate: Gate) -> Option<f64> {
    let (sum, count) = traces
        .iter()
        .flat_map(|t| t.values(gate))
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}
