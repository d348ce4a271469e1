use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::LabelScheme;
use crate::embed::EmbedDims;
use crate::error::{Error, Result};
use crate::graph::Aggregation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    SynLstmCrf,
    BilstmCrf,
    GcnConcatBilstmCrf,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::SynLstmCrf, Variant::BilstmCrf, Variant::GcnConcatBilstmCrf];

    pub fn name(self) -> &'static str {
        match self {
            Variant::SynLstmCrf => "syn-lstm-crf",
            Variant::BilstmCrf => "bilstm-crf",
            Variant::GcnConcatBilstmCrf => "gcn-concat-bilstm-crf",
        }
    }

    pub fn uses_graph(self) -> bool {
        self != Variant::BilstmCrf
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::contract(format!("unknown model variant {s}")))
    }
}

/// Where dependency trees come from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TreeSource {
    /// The trees in the corpus file.
    #[default]
    Given,
    /// Heads and relations read from a parallel corpus file.
    PredictedFile(PathBuf),
    /// Uniform random trees, redrawn from the run seed.
    Random,
}

impl fmt::Display for TreeSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TreeSource::Given => f.write_str("given"),
            TreeSource::Random => f.write_str("random"),
            TreeSource::PredictedFile(p) => write!(f, "predicted={}", p.display()),
        }
    }
}

impl FromStr for TreeSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "given" => Ok(TreeSource::Given),
            "random" => Ok(TreeSource::Random),
            _ => match s.strip_prefix("predicted=") {
                Some(path) if !path.is_empty() => Ok(TreeSource::PredictedFile(path.into())),
                _ => Err(Error::contract(format!("unknown tree source {s}"))),
            },
        }
    }
}

/// What the Syn-LSTM (or the concat baseline) receives as `g_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphInput {
    #[default]
    Gcn,
    /// Zero vectors in place of the GCN output.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub hidden: usize,
    pub gcn_layers: usize,
    pub graph_input: GraphInput,
    pub aggregation: Aggregation,
    pub word_dim: usize,
    pub char_dim: usize,
    pub char_hidden: usize,
    pub deprel_dim: usize,
    pub pos_dim: usize,
    pub use_deprel: bool,
    pub use_pos: bool,
    pub dropout: f64,
    pub lr: f64,
    pub decay: f64,
    pub l2: f64,
    pub clip: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub label_scheme: LabelScheme,
    pub tree_source: TreeSource,
    pub constrained: bool,
    pub fine_tune_words: bool,
    pub embeddings: Option<PathBuf>,
    pub min_count: usize,
    pub track_train_f1: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::SynLstmCrf,
            hidden: 200,
            gcn_layers: 2,
            graph_input: GraphInput::Gcn,
            aggregation: Aggregation::Neighbor,
            word_dim: 100,
            char_dim: 30,
            char_hidden: 50,
            deprel_dim: 50,
            pos_dim: 50,
            use_deprel: true,
            use_pos: true,
            dropout: 0.5,
            lr: 0.2,
            decay: 0.1,
            l2: 1e-8,
            clip: 5.0,
            batch_size: 100,
            epochs: 100,
            seed: 42,
            label_scheme: LabelScheme::Bioes,
            tree_source: TreeSource::Given,
            constrained: false,
            fine_tune_words: true,
            embeddings: None,
            min_count: 1,
            track_train_f1: false,
        }
    }
}

impl ModelConfig {
    /// Small dimensions for the synthetic experiments: the structure of the
    /// full model at a size that trains in seconds on one core.
    pub fn synthetic() -> Self {
        Self {
            hidden: 16,
            word_dim: 16,
            char_dim: 8,
            char_hidden: 8,
            deprel_dim: 8,
            pos_dim: 8,
            batch_size: 10,
            epochs: 50,
            dropout: 0.1,
            ..Self::default()
        }
    }

    /// Embedding sizes; the plain BiLSTM baseline gets no dependency
    /// relation block, so it sees nothing of the tree.
    pub fn embed_dims(&self) -> EmbedDims {
        EmbedDims {
            word: self.word_dim,
            char: self.char_dim,
            char_hidden: self.char_hidden,
            deprel: self.deprel_dim,
            pos: self.pos_dim,
            use_deprel: self.use_deprel && self.variant.uses_graph(),
            use_pos: self.use_pos,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden", self.hidden),
            ("word_dim", self.word_dim),
            ("char_dim", self.char_dim),
            ("char_hidden", self.char_hidden),
            ("batch_size", self.batch_size),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::contract(format!("{k} must be positive")));
        }
        if self.variant.uses_graph() && self.graph_input == GraphInput::Gcn && self.gcn_layers == 0 {
            return Err(Error::contract("gcn_layers must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::contract(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.lr > 0.0) || self.decay < 0.0 || self.l2 < 0.0 || !(self.clip > 0.0) {
            return Err(Error::contract("lr and clip must be positive; decay and l2 non-negative"));
        }
        Ok(())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| Error::contract(format!("bad value {value:?} for {key}")))
        }
        match key {
            "variant" => self.variant = value.parse()?,
            "hidden" => self.hidden = parse(key, value)?,
            "gcn_layers" => self.gcn_layers = parse(key, value)?,
            "graph_input" => {
                self.graph_input = match value {
                    "gcn" => GraphInput::Gcn,
                    "zero" => GraphInput::Zero,
                    _ => return Err(Error::contract(format!("bad value {value:?} for {key}"))),
                }
            }
            "aggregation" => self.aggregation = value.parse()?,
            "word_dim" => self.word_dim = parse(key, value)?,
            "char_dim" => self.char_dim = parse(key, value)?,
            "char_hidden" => self.char_hidden = parse(key, value)?,
            "deprel_dim" => self.deprel_dim = parse(key, value)?,
            "pos_dim" => self.pos_dim = parse(key, value)?,
            "use_deprel" => self.use_deprel = parse(key, value)?,
            "use_pos" => self.use_pos = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "decay" => self.decay = parse(key, value)?,
            "l2" => self.l2 = parse(key, value)?,
            "clip" => self.clip = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "label_scheme" => self.label_scheme = value.parse()?,
            "tree_source" => self.tree_source = value.parse()?,
            "constrained" => self.constrained = parse(key, value)?,
            "fine_tune_words" => self.fine_tune_words = parse(key, value)?,
            "embeddings" => self.embeddings = (!value.is_empty() && value != "none").then(|| value.into()),
            "min_count" => self.min_count = parse(key, value)?,
            "track_train_f1" => self.track_train_f1 = parse(key, value)?,
            "preset" => {
                *self = match value {
                    "default" => Self::default(),
                    "synthetic" => Self::synthetic(),
                    _ => return Err(Error::contract(format!("unknown preset {value}"))),
                }
            }
            _ => return Err(Error::contract(format!("unknown config key {key}"))),
        }
        Ok(())
    }

    /// Parses the flat `key = value` format. `#` starts a comment; a
    /// `preset` line resets every field, so it belongs at the top.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse { line: i + 1, message: format!("expected key = value, got {line:?}") });
            };
            config
                .set(key.trim(), value.trim())
                .map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Renders every field in the format accepted by [`ModelConfig::parse`].
    pub fn to_text(&self) -> String {
        let graph_input = match self.graph_input {
            GraphInput::Gcn => "gcn",
            GraphInput::Zero => "zero",
        };
        let aggregation = match self.aggregation {
            Aggregation::Neighbor => "neighbor",
            Aggregation::SelfOnly => "self-only",
        };
        let embeddings = self.embeddings.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        let lines = [
            ("variant", self.variant.to_string()),
            ("hidden", self.hidden.to_string()),
            ("gcn_layers", self.gcn_layers.to_string()),
            ("graph_input", graph_input.to_string()),
            ("aggregation", aggregation.to_string()),
            ("word_dim", self.word_dim.to_string()),
            ("char_dim", self.char_dim.to_string()),
            ("char_hidden", self.char_hidden.to_string()),
            ("deprel_dim", self.deprel_dim.to_string()),
            ("pos_dim", self.pos_dim.to_string()),
            ("use_deprel", self.use_deprel.to_string()),
            ("use_pos", self.use_pos.to_string()),
            ("dropout", self.dropout.to_string()),
            ("lr", self.lr.to_string()),
            ("decay", self.decay.to_string()),
            ("l2", self.l2.to_string()),
            ("clip", self.clip.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("seed", self.seed.to_string()),
            ("label_scheme", self.label_scheme.to_string()),
            ("tree_source", self.tree_source.to_string()),
            ("constrained", self.constrained.to_string()),
            ("fine_tune_words", self.fine_tune_words.to_string()),
            ("embeddings", embeddings),
            ("min_count", self.min_count.to_string()),
            ("track_train_f1", self.track_train_f1.to_string()),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
