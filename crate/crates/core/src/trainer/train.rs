use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::ParamStore;
use crate::data::{build_vocab, embedding_matrix, read_embedding_file, Sentence};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::trainer::config::{ModelConfig, TreeSource};
use crate::trainer::model::Model;
use crate::trainer::trees::randomize_trees;

/// `lr / (1 + decay * (epoch - 1))`, epochs counted from 1.
pub fn epoch_lr(epoch: usize, lr: f64, decay: f64) -> Result<f64> {
    if epoch == 0 {
        return Err(Error::contract("epochs are numbered from 1"));
    }
    Ok(lr / (1.0 + decay * (epoch - 1) as f64))
}

/// `p <- p - rate * (grad + l2 * p)` for every trainable parameter, then
/// clears the gradients. A trainable parameter without a gradient is a
/// contract error and leaves every parameter untouched.
pub fn sgd_step(store: &mut ParamStore, rate: f64, l2: f64) -> Result<()> {
    let missing: Vec<String> = store
        .iter()
        .filter(|(_, _, t)| t.requires_grad() && t.grad().is_none())
        .map(|(_, name, _)| name.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::contract(format!("no gradient for {}", missing.join(", "))));
    }
    for id in store.ids().collect::<Vec<_>>() {
        let t = store.get_mut(id);
        if !t.requires_grad() {
            continue;
        }
        let grad = t.grad().expect("checked above").to_vec();
        for (p, g) in t.data_mut().iter_mut().zip(grad) {
            *p -= rate * (g + l2 * *p);
        }
        t.zero_grad();
    }
    Ok(())
}

/// Rescales gradients to global norm `max_norm` when above it; returns the
/// norm before clipping.
pub fn clip_gradients(store: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = store.grad_norm();
    if norm > max_norm {
        store.scale_grads(max_norm / norm);
    }
    norm
}

/// A group of sentences padded to a common length. `mask[b][t]` is true
/// for real tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub max_len: usize,
    pub mask: Vec<Vec<bool>>,
}

impl Batch {
    pub fn real_len(&self, b: usize) -> usize {
        self.mask[b].iter().filter(|&&m| m).count()
    }
}

/// Splits `order` into consecutive batches of at most `batch_size`.
pub fn make_batches(lengths: &[usize], order: &[usize], batch_size: usize) -> Vec<Batch> {
    order
        .chunks(batch_size.max(1))
        .map(|chunk| {
            let max_len = chunk.iter().map(|&i| lengths[i]).max().unwrap_or(0);
            Batch {
                indices: chunk.to_vec(),
                max_len,
                mask: chunk.iter().map(|&i| (0..max_len).map(|t| t < lengths[i]).collect()).collect(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    /// Mean sentence NLL over the epoch (with dropout).
    pub loss: f64,
    pub dev_f1: f64,
    pub train_f1: Option<f64>,
}

/// A trained model and how it was selected.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
    pub history: Vec<EpochStats>,
}

impl Checkpoint {
    pub fn losses(&self) -> Vec<f64> {
        self.history.iter().map(|h| h.loss).collect()
    }
}

/// Replaces trees according to `source`. Random trees are drawn from
/// `seed`; predicted trees are read from a file aligned with `corpus`.
pub fn apply_tree_source(corpus: &[Sentence], source: &TreeSource, seed: u64) -> Result<Vec<Sentence>> {
    match source {
        TreeSource::Given => Ok(corpus.to_vec()),
        TreeSource::Random => Ok(randomize_trees(corpus, seed)),
        TreeSource::PredictedFile(path) => {
            let parsed = crate::data::parse_corpus(path)?;
            override_trees(corpus, &parsed)
        }
    }
}

/// Copies heads and relations from `trees` onto `corpus`.
pub fn override_trees(corpus: &[Sentence], trees: &[Sentence]) -> Result<Vec<Sentence>> {
    if corpus.len() != trees.len() {
        return Err(Error::contract(format!(
            "tree file has {} sentences, corpus has {}",
            trees.len(),
            corpus.len()
        )));
    }
    corpus
        .iter()
        .zip(trees)
        .enumerate()
        .map(|(i, (s, t))| {
            if s.tokens != t.tokens {
                return Err(Error::DataIntegrity(format!("sentence {} tokens differ in the tree file", i + 1)));
            }
            let mut out = s.clone();
            out.heads = t.heads.clone();
            out.deprels = t.deprels.clone();
            Ok(out)
        })
        .collect()
}

/// Builds the vocabulary from `train`, initialises a model and trains it.
/// Tree sources are not applied here; see [`apply_tree_source`].
pub fn train(config: &ModelConfig, train: &[Sentence], dev: &[Sentence]) -> Result<Checkpoint> {
    let vocab = build_vocab(train, config.min_count);
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    init_rng.set_stream(2);
    let words = match &config.embeddings {
        Some(path) => {
            let file = read_embedding_file(path)?;
            if file.dim != config.word_dim {
                return Err(Error::Format(format!(
                    "embedding file has dimension {}, config expects {}",
                    file.dim, config.word_dim
                )));
            }
            Some(embedding_matrix(&file, &vocab, &mut init_rng))
        }
        None => None,
    };
    let model = Model::new(config.clone(), vocab, words)?;
    train_model(model, train, dev)
}

/// Runs SGD on `model` for `config.epochs` epochs and returns the epoch
/// with the best dev F1 (earliest on ties; epoch 0 is the initialisation).
pub fn train_model(mut model: Model, train: &[Sentence], dev: &[Sentence]) -> Result<Checkpoint> {
    let cfg = model.config.clone();
    if train.is_empty() {
        return Err(Error::contract("empty training corpus"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let lengths: Vec<usize> = train.iter().map(Sentence::len).collect();
    let mut order: Vec<usize> = (0..train.len()).collect();

    let initial_f1 = evaluate(&model, dev)?.overall.f1;
    let mut best = (0, initial_f1, model.store.clone());
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let lr = epoch_lr(epoch, cfg.lr, cfg.decay)?;
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, batch) in make_batches(&lengths, &order, cfg.batch_size).iter().enumerate() {
            model.store.zero_grads();
            let scale = 1.0 / batch.indices.len() as f64;
            let mut batch_loss = 0.0;
            for (k, &i) in batch.indices.iter().enumerate() {
                // Padding positions carry no computation: each sentence
                // runs at its real length.
                debug_assert_eq!(batch.real_len(k), train[i].len());
                let (loss, grads) = model.loss_and_grads(&train[i], Some(&mut rng))?;
                batch_loss += loss * scale;
                model.store.accumulate(&grads, scale)?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::NumericalAbort { epoch, batch: b + 1, loss: batch_loss });
            }
            epoch_loss += batch_loss * batch.indices.len() as f64;
            clip_gradients(&mut model.store, cfg.clip);
            sgd_step(&mut model.store, lr, cfg.l2)?;
        }
        let dev_f1 = evaluate(&model, dev)?.overall.f1;
        let train_f1 = match cfg.track_train_f1 {
            true => Some(evaluate(&model, train)?.overall.f1),
            false => None,
        };
        history.push(EpochStats { epoch, lr, loss: epoch_loss / train.len() as f64, dev_f1, train_f1 });
        if dev_f1 > best.1 {
            best = (epoch, dev_f1, model.store.clone());
        }
    }
    model.store = best.2;
    model.store.zero_grads();
    Ok(Checkpoint { model, best_epoch: best.0, best_dev_f1: best.1, history })
}
