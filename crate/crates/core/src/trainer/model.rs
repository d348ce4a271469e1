use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Axis, ParamGrads, ParamStore, Tape, Tensor, Var};
use crate::cell::{run_bidirectional, run_bilstm, GateTrace, LstmParams, SynLstmParams};
use crate::crf::{scheme_constraints, viterbi, CrfParams, TagLattice, Transitions};
use crate::data::{convert_label_scheme, encode_spans, strict_spans, EntitySpan, LabelScheme, Sentence, Vocabulary};
use crate::embed::{assemble, dropout, EmbeddingTables, SentenceIds};
use crate::error::{Error, Result};
use crate::graph::{build_adjacency, encode, AdjacencyMatrix, GcnParams};
use crate::trainer::config::{GraphInput, ModelConfig, Variant};

/// The recurrent layer between inputs and the CRF.
#[derive(Debug, Clone, PartialEq)]
pub enum Encoder {
    Syn { fwd: SynLstmParams, bwd: SynLstmParams },
    Lstm { fwd: LstmParams, bwd: LstmParams },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parts {
    pub embed: EmbeddingTables,
    pub gcn: Option<GcnParams>,
    pub encoder: Encoder,
    pub crf: CrfParams,
}

/// A sentence turned into ids, adjacency and (when labelled) gold ids.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub ids: SentenceIds,
    pub adjacency: AdjacencyMatrix,
}

/// Parameters plus everything needed to interpret them.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub store: ParamStore,
    pub parts: Parts,
}

impl Model {
    /// Registers all parameters, initialised from `config.seed`. `words`
    /// replaces the random word table.
    pub fn new(config: ModelConfig, vocab: Vocabulary, words: Option<Tensor>) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let dims = config.embed_dims();
        let embed = EmbeddingTables::register(&mut store, &vocab, dims, words, &mut rng)?;
        if !config.fine_tune_words {
            store.set_trainable(embed.word, false);
        }
        let h = config.hidden;
        let graph_dim = h;
        let gcn = match (config.variant.uses_graph(), config.graph_input) {
            (true, GraphInput::Gcn) => Some(GcnParams::register(&mut store, "gcn", dims.g0_dim(), graph_dim, config.gcn_layers, &mut rng)?),
            _ => None,
        };
        let encoder = match config.variant {
            Variant::SynLstmCrf => Encoder::Syn {
                fwd: SynLstmParams::register(&mut store, "syn.fwd", dims.x_dim(), graph_dim, h, &mut rng)?,
                bwd: SynLstmParams::register(&mut store, "syn.bwd", dims.x_dim(), graph_dim, h, &mut rng)?,
            },
            Variant::BilstmCrf | Variant::GcnConcatBilstmCrf => {
                let input = match config.variant {
                    Variant::BilstmCrf => dims.x_dim(),
                    _ => dims.x_dim() + graph_dim,
                };
                Encoder::Lstm {
                    fwd: LstmParams::register(&mut store, "lstm.fwd", input, h, &mut rng)?,
                    bwd: LstmParams::register(&mut store, "lstm.bwd", input, h, &mut rng)?,
                }
            }
        };
        let mut crf = CrfParams::register(&mut store, "crf", 2 * h, vocab.num_labels(), &mut rng)?;
        if config.constrained {
            crf.allowed = Some(scheme_constraints(vocab.labels.entries(), LabelScheme::Bioes)?);
        }
        Ok(Self { config, vocab, store, parts: Parts { embed, gcn, encoder, crf } })
    }

    pub fn prepare(&self, sentence: &Sentence) -> Prepared {
        Prepared {
            ids: SentenceIds::encode(sentence, &self.vocab),
            adjacency: build_adjacency(&sentence.heads),
        }
    }

    /// Gold label ids (the model labels internally in BIOES).
    pub fn gold_ids(&self, sentence: &Sentence) -> Result<Vec<usize>> {
        let labels = convert_label_scheme(&sentence.labels, self.config.label_scheme, LabelScheme::Bioes)?;
        labels
            .iter()
            .map(|l| {
                self.vocab
                    .label_id(l)
                    .ok_or_else(|| Error::DataIntegrity(format!("label {l} is not in the label vocabulary")))
            })
            .collect()
    }

    /// Emission scores `n x L`. Dropout is applied when `train_rng` is given;
    /// gate values are appended to `trace` for the Syn-LSTM variant.
    pub fn emissions(
        &self,
        tape: &mut Tape,
        prep: &Prepared,
        mut train_rng: Option<&mut ChaCha8Rng>,
        trace: Option<&mut GateTrace>,
    ) -> Result<Var> {
        let cfg = &self.config;
        let p = &self.parts;
        let n = prep.ids.len();
        let rate = cfg.dropout;
        let a = assemble(tape, &p.embed, &prep.ids, train_rng.as_deref_mut().map(|r| (rate, r)))?;
        let graph = |tape: &mut Tape| -> Result<Var> {
            match &p.gcn {
                Some(gcn) => encode(tape, a.g0, &prep.adjacency, gcn, cfg.aggregation),
                None => Ok(tape.zeros(n, cfg.hidden)),
            }
        };
        let h = match (&p.encoder, cfg.variant) {
            (Encoder::Syn { fwd, bwd }, _) => {
                let g = graph(tape)?;
                run_bidirectional(tape, a.x, g, fwd, bwd, trace)?
            }
            (Encoder::Lstm { fwd, bwd }, Variant::GcnConcatBilstmCrf) => {
                let g = graph(tape)?;
                let input = tape.concat(&[a.x, g], Axis::Cols)?;
                run_bilstm(tape, fwd, bwd, input)?
            }
            (Encoder::Lstm { fwd, bwd }, _) => run_bilstm(tape, fwd, bwd, a.x)?,
        };
        let h = match train_rng {
            Some(rng) => dropout(tape, h, rate, rng)?,
            None => h,
        };
        p.crf.emissions(tape, h)
    }

    pub fn transitions(&self) -> Result<Transitions> {
        self.parts.crf.transition_scores(&self.store)
    }

    /// Evaluation-mode lattice and gate trace of one sentence.
    pub fn forward_sentence(&self, sentence: &Sentence) -> Result<(TagLattice, GateTrace)> {
        let prep = self.prepare(sentence);
        let mut trace = GateTrace::default();
        let mut tape = Tape::with_params(&self.store);
        let e = self.emissions(&mut tape, &prep, None, Some(&mut trace))?;
        let (n, l) = tape.shape(e);
        Ok((TagLattice::new(n, l, tape.value(e).to_vec())?, trace))
    }

    /// Viterbi label ids.
    pub fn decode(&self, sentence: &Sentence) -> Result<Vec<usize>> {
        let (lattice, _) = self.forward_sentence(sentence)?;
        Ok(viterbi(&lattice, &self.transitions()?)?.0)
    }

    /// Predicted entities; malformed predicted segments are dropped.
    pub fn predict_spans(&self, sentence: &Sentence) -> Result<Vec<EntitySpan>> {
        let ids = self.decode(sentence)?;
        let labels: Vec<&str> = ids.iter().map(|&i| self.vocab.labels.entry(i)).collect();
        Ok(strict_spans(&labels, LabelScheme::Bioes))
    }

    /// Predicted labels in the corpus scheme, always well formed.
    pub fn predict_labels(&self, sentence: &Sentence) -> Result<Vec<String>> {
        let spans = self.predict_spans(sentence)?;
        Ok(encode_spans(&spans, sentence.len(), self.config.label_scheme))
    }

    /// Sentence NLL and its parameter gradients. `train_rng` switches
    /// dropout on.
    pub fn loss_and_grads(&self, sentence: &Sentence, train_rng: Option<&mut ChaCha8Rng>) -> Result<(f64, ParamGrads)> {
        let prep = self.prepare(sentence);
        let gold = self.gold_ids(sentence)?;
        let mut tape = Tape::with_params(&self.store);
        let e = self.emissions(&mut tape, &prep, train_rng, None)?;
        let loss = self.parts.crf.nll(&mut tape, e, &gold)?;
        tape.backward(loss)?;
        Ok((tape.scalar(loss), tape.param_grads()))
    }

    /// Evaluation-mode NLL.
    pub fn loss(&self, sentence: &Sentence) -> Result<f64> {
        let prep = self.prepare(sentence);
        let gold = self.gold_ids(sentence)?;
        let mut tape = Tape::with_params(&self.store);
        let e = self.emissions(&mut tape, &prep, None, None)?;
        let loss = self.parts.crf.nll(&mut tape, e, &gold)?;
        Ok(tape.scalar(loss))
    }
}
