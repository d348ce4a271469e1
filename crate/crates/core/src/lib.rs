//! Dependency-guided named entity recognition.
//!
//! The crate implements the Syn-LSTM recurrent cell, which mixes a token
//! representation with a graph-encoded representation produced by a GCN over
//! the dependency tree, and decodes with a linear-chain CRF. Everything needed
//! to train, evaluate and analyse such models at desk scale lives here:
//!
//! - [`autodiff`]: `f64` tensors and a dynamic reverse-mode tape
//! - [`data`]: corpus parsing, vocabularies, label schemes, embedding files
//! - [`embed`]: token input rows and GCN seed rows
//! - [`graph`]: dependency adjacency and the GCN stack
//! - [`cell`]: the Syn-LSTM cell, plain LSTM and the cell-state expansion
//! - [`crf`]: lattice scoring, forward algorithm, Viterbi, brute-force oracle
//! - [`trainer`]: model variants, SGD, checkpoints, random trees
//! - [`eval`]: entity F1, gate histograms, bootstrap test, experiments

pub mod autodiff;
pub mod cell;
pub mod crf;
pub mod data;
pub mod embed;
mod error;
pub mod eval;
pub mod gradcheck;
pub mod init;
pub mod graph;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
