use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::data::{parse_spans, strict_spans, EntitySpan, LabelScheme, Sentence};
use crate::error::{Error, Result};
use crate::trainer::Model;

/// Sentence-length buckets `(label, min, max)`, inclusive.
pub const SENTENCE_LENGTH_BUCKETS: [(&str, usize, usize); 5] =
    [("<=14", 0, 14), ("15-29", 15, 29), ("30-44", 30, 44), ("45-59", 45, 59), (">=60", 60, usize::MAX)];

/// Entity-length buckets `(label, min, max)`, inclusive.
pub const ENTITY_LENGTH_BUCKETS: [(&str, usize, usize); 6] =
    [("1", 1, 1), ("2", 2, 2), ("3", 3, 3), ("4", 4, 4), ("5", 5, 5), (">=6", 6, usize::MAX)];

fn bucket(buckets: &[(&'static str, usize, usize)], len: usize) -> usize {
    buckets.iter().position(|&(_, lo, hi)| lo <= len && len <= hi).expect("buckets cover all lengths")
}

/// Match counts and the scores derived from them; every ratio with a zero
/// denominator is 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

impl Prf {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp as f64, (tp + fp) as f64);
        let recall = ratio(tp as f64, (tp + fn_) as f64);
        let f1 = ratio(2.0 * precision * recall, precision + recall);
        Self { tp, fp, fn_, precision, recall, f1 }
    }

    fn add(&mut self, tp: usize, fp: usize, fn_: usize) {
        *self = Self::from_counts(self.tp + tp, self.fp + fp, self.fn_ + fn_);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: Prf,
    pub per_type: BTreeMap<String, Prf>,
    /// In [`SENTENCE_LENGTH_BUCKETS`] order.
    pub sentence_length: Vec<(String, Prf)>,
    /// In [`ENTITY_LENGTH_BUCKETS`] order.
    pub entity_length: Vec<(String, Prf)>,
}

impl EvalReport {
    /// Flat `metric,bucket,value` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,bucket,value\n");
        let mut rows = |prefix: &str, name: &str, p: &Prf| {
            let bucket = if prefix.is_empty() { name.to_string() } else { format!("{prefix}:{name}") };
            for (metric, v) in [("precision", p.precision), ("recall", p.recall), ("f1", p.f1)] {
                let _ = writeln!(out, "{metric},{bucket},{v}");
            }
            for (metric, v) in [("tp", p.tp), ("fp", p.fp), ("fn", p.fn_)] {
                let _ = writeln!(out, "{metric},{bucket},{v}");
            }
        };
        rows("", "overall", &self.overall);
        for (t, p) in &self.per_type {
            rows("type", t, p);
        }
        for (b, p) in &self.sentence_length {
            rows("sentence_length", b, p);
        }
        for (b, p) in &self.entity_length {
            rows("entity_length", b, p);
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let o = &self.overall;
        let _ = writeln!(out, "overall  P={:.4} R={:.4} F1={:.4} (tp={} fp={} fn={})", o.precision, o.recall, o.f1, o.tp, o.fp, o.fn_);
        for (t, p) in &self.per_type {
            let _ = writeln!(out, "type {t:<10} P={:.4} R={:.4} F1={:.4}", p.precision, p.recall, p.f1);
        }
        for (b, p) in &self.sentence_length {
            let _ = writeln!(out, "sentence length {b:<6} F1={:.4} (gold={})", p.f1, p.tp + p.fn_);
        }
        for (b, p) in &self.entity_length {
            let _ = writeln!(out, "entity length {b:<4} F1={:.4} (gold={})", p.f1, p.tp + p.fn_);
        }
        out
    }
}

/// Entities of a possibly malformed label sequence (malformed segments are
/// dropped).
pub fn decode_spans<S: AsRef<str>>(labels: &[S], scheme: LabelScheme) -> Vec<EntitySpan> {
    strict_spans(labels, scheme)
}

/// Exact-match scoring of aligned span lists. `lengths[i]` is the token
/// count of sentence `i`.
pub fn report_from_spans(gold: &[Vec<EntitySpan>], pred: &[Vec<EntitySpan>], lengths: &[usize]) -> Result<EvalReport> {
    if gold.len() != pred.len() || gold.len() != lengths.len() {
        return Err(Error::contract(format!(
            "misaligned corpora: {} gold, {} predicted, {} lengths",
            gold.len(),
            pred.len(),
            lengths.len()
        )));
    }
    let mut overall = Prf::default();
    let mut per_type: BTreeMap<String, Prf> = BTreeMap::new();
    let mut by_sentence = vec![Prf::default(); SENTENCE_LENGTH_BUCKETS.len()];
    let mut by_entity = vec![Prf::default(); ENTITY_LENGTH_BUCKETS.len()];
    for ((g, p), &n) in gold.iter().zip(pred).zip(lengths) {
        let sb = bucket(&SENTENCE_LENGTH_BUCKETS, n);
        for span in p {
            let hit = g.contains(span) as usize;
            let eb = bucket(&ENTITY_LENGTH_BUCKETS, span.len());
            overall.add(hit, 1 - hit, 0);
            per_type.entry(span.kind.clone()).or_default().add(hit, 1 - hit, 0);
            by_sentence[sb].add(hit, 1 - hit, 0);
            by_entity[eb].add(hit, 1 - hit, 0);
        }
        for span in g {
            if !p.contains(span) {
                let eb = bucket(&ENTITY_LENGTH_BUCKETS, span.len());
                overall.add(0, 0, 1);
                per_type.entry(span.kind.clone()).or_default().add(0, 0, 1);
                by_sentence[sb].add(0, 0, 1);
                by_entity[eb].add(0, 0, 1);
            }
        }
    }
    let label = |b: &[(&str, usize, usize)], v: Vec<Prf>| b.iter().map(|(l, _, _)| l.to_string()).zip(v).collect();
    Ok(EvalReport {
        overall,
        per_type,
        sentence_length: label(&SENTENCE_LENGTH_BUCKETS, by_sentence),
        entity_length: label(&ENTITY_LENGTH_BUCKETS, by_entity),
    })
}

/// Compares the label columns of two aligned corpora. Gold labels must be
/// well formed; predicted ones are decoded leniently.
pub fn entity_f1(gold: &[Sentence], pred: &[Sentence], scheme: LabelScheme) -> Result<EvalReport> {
    if gold.len() != pred.len() {
        return Err(Error::contract(format!("misaligned corpora: {} gold vs {} predicted sentences", gold.len(), pred.len())));
    }
    let mut gs = Vec::with_capacity(gold.len());
    let mut ps = Vec::with_capacity(gold.len());
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(Error::contract(format!("sentence {} has {} gold and {} predicted tokens", i + 1, g.len(), p.len())));
        }
        gs.push(parse_spans(&g.labels, scheme)?);
        ps.push(decode_spans(&p.labels, scheme));
    }
    let lengths: Vec<usize> = gold.iter().map(Sentence::len).collect();
    report_from_spans(&gs, &ps, &lengths)
}

/// Gold and predicted spans of `model` on `corpus`.
pub fn spans_for(model: &Model, corpus: &[Sentence]) -> Result<(Vec<Vec<EntitySpan>>, Vec<Vec<EntitySpan>>)> {
    let scheme = model.config.label_scheme;
    let mut gold = Vec::with_capacity(corpus.len());
    let mut pred = Vec::with_capacity(corpus.len());
    for s in corpus {
        gold.push(parse_spans(&s.labels, scheme)?);
        pred.push(model.predict_spans(s)?);
    }
    Ok((gold, pred))
}

/// Entity F1 of `model` on `corpus`.
pub fn evaluate(model: &Model, corpus: &[Sentence]) -> Result<EvalReport> {
    let (gold, pred) = spans_for(model, corpus)?;
    let lengths: Vec<usize> = corpus.iter().map(Sentence::len).collect();
    report_from_spans(&gold, &pred, &lengths)
}

/// `corpus` with its label column replaced by the model's predictions.
pub fn predict_corpus(model: &Model, corpus: &[Sentence]) -> Result<Vec<Sentence>> {
    corpus
        .iter()
        .map(|s| {
            let mut out = s.clone();
            out.labels = model.predict_labels(s)?;
            Ok(out)
        })
        .collect()
}
