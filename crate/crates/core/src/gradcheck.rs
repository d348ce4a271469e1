//! Central finite differences and the model-level gradient suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{build_vocab, encode_spans, EntitySpan, LabelScheme, Sentence};
use crate::error::Result;
use crate::trainer::{random_tree, Model, ModelConfig, Variant};

/// Denominator floor for [`relative_error`]; below it the error is absolute.
pub const REL_ERR_FLOOR: f64 = 1e-3;

/// `(f(+h) - f(-h)) / 2h`, where `f` receives the signed perturbation.
pub fn central_difference<F: FnMut(f64) -> f64>(mut f: F, step: f64) -> f64 {
    (f(step) - f(-step)) / (2.0 * step)
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Outcome of [`model_suite`] for one model variant.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantCheck {
    pub variant: Variant,
    pub checked: usize,
    pub max_rel_err: f64,
    /// Parameter and entry of the largest error.
    pub worst: Option<(String, usize)>,
}

/// `n` random sentences of `len` tokens with random trees and labels.
pub fn random_sentences(n: usize, len: usize, seed: u64) -> Vec<Sentence> {
    const WORDS: [&str; 8] = ["ab", "cab", "b", "dace", "ed", "fa", "Gb", "hac"];
    const TYPES: [&str; 2] = ["PER", "LOC"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut spans = Vec::new();
            let mut t = 0;
            while t < len {
                let width = rng.gen_range(1..=2).min(len - t);
                if rng.gen_bool(0.5) {
                    spans.push(EntitySpan::new(t, t + width - 1, TYPES[rng.gen_range(0..2)]));
                }
                t += width;
            }
            Sentence {
                tokens: (0..len).map(|_| WORDS[rng.gen_range(0..WORDS.len())].to_string()).collect(),
                pos_tags: (0..len).map(|_| ["NN", "VB", "DT"][rng.gen_range(0..3)].to_string()).collect(),
                heads: random_tree(len, &mut rng),
                deprels: (0..len).map(|_| ["nsubj", "obj", "det"][rng.gen_range(0..3)].to_string()).collect(),
                labels: encode_spans(&spans, len, LabelScheme::Bioes),
            }
        })
        .collect()
}

fn corpus_loss(model: &Model, corpus: &[Sentence]) -> Result<f64> {
    corpus.iter().map(|s| model.loss(s)).sum()
}

/// Compares every trainable parameter gradient of the summed evaluation-mode
/// NLL of `corpus` with central differences of the given `step`.
pub fn check_model(model: &mut Model, corpus: &[Sentence], step: f64) -> Result<VariantCheck> {
    let mut analytic: Vec<Option<Vec<f64>>> = vec![None; model.store.len()];
    for s in corpus {
        let (_, grads) = model.loss_and_grads(s, None)?;
        for (id, g) in grads.iter() {
            let slot = analytic[id.index()].get_or_insert_with(|| vec![0.0; g.len()]);
            slot.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
    }
    let mut out = VariantCheck { variant: model.config.variant, checked: 0, max_rel_err: 0.0, worst: None };
    for id in model.store.ids().collect::<Vec<_>>() {
        if !model.store.get(id).requires_grad() {
            continue;
        }
        for k in 0..model.store.get(id).len() {
            let original = model.store.get(id).data()[k];
            let mut at = |delta: f64| -> Result<f64> {
                model.store.get_mut(id).data_mut()[k] = original + delta;
                corpus_loss(model, corpus)
            };
            let (plus, minus) = (at(step)?, at(-step)?);
            model.store.get_mut(id).data_mut()[k] = original;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[id.index()].as_ref().map_or(0.0, |g| g[k]);
            let err = relative_error(a, numeric);
            if !(err <= out.max_rel_err) {
                out.max_rel_err = err;
                out.worst = Some((model.store.name(id).to_string(), k));
            }
            out.checked += 1;
        }
    }
    Ok(out)
}

/// Adds seeded uniform noise in ±0.1 to every non-embedding parameter, so
/// that zero-initialised biases and transitions do not leave ReLU units
/// sitting exactly on their kink.
fn jitter(model: &mut Model, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(7);
    for id in model.store.ids().collect::<Vec<_>>() {
        if !model.store.name(id).starts_with("embed.") {
            model.store.get_mut(id).data_mut().iter_mut().for_each(|v| *v += rng.gen_range(-0.1..0.1));
        }
    }
}

/// Widest embedding block of a [`model_suite`] instance.
pub const SUITE_MAX_DIM: usize = 8;

/// The full suite: each variant built from `config` on 5 random 3-token
/// sentences. Structure options are kept; the hidden size becomes `hidden`
/// and embedding widths are capped at [`SUITE_MAX_DIM`].
pub fn model_suite(config: &ModelConfig, hidden: usize, seed: u64) -> Result<Vec<VariantCheck>> {
    let corpus = random_sentences(5, 3, seed);
    let vocab = build_vocab(&corpus, 1);
    let cap = |d: usize| d.min(SUITE_MAX_DIM);
    Variant::ALL
        .iter()
        .map(|&variant| {
            let cfg = ModelConfig {
                variant,
                hidden,
                seed,
                dropout: 0.0,
                word_dim: cap(config.word_dim),
                char_dim: cap(config.char_dim),
                char_hidden: cap(config.char_hidden),
                deprel_dim: cap(config.deprel_dim),
                pos_dim: cap(config.pos_dim),
                embeddings: None,
                ..config.clone()
            };
            let mut model = Model::new(cfg, vocab.clone(), None)?;
            jitter(&mut model, seed);
            check_model(&mut model, &corpus, 1e-5)
        })
        .collect()
}
