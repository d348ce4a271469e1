//! Model assembly, SGD training, checkpoints and tree sources.

pub mod checkpoint;
mod config;
mod model;
mod train;
mod trees;

pub use checkpoint::{load, save};
pub use config::{GraphInput, ModelConfig, TreeSource, Variant};
pub use model::{Encoder, Model, Parts, Prepared};
pub use train::{
    apply_tree_source, clip_gradients, epoch_lr, make_batches, override_trees, sgd_step, train, train_model, Batch, Checkpoint,
    EpochStats,
};
pub use trees::{prufer_edges, random_tree, randomize_trees};
