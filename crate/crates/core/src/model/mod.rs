//! The classifier: layer stack description, instantiated network, training
//! loop, evaluation and checkpoints.

mod checkpoint;
mod network;
mod spec;
mod trainer;

pub use self::checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use self::network::{ForwardPass, Layer, LayerCache, Network};
pub use self::spec::{LayerCounts, LayerSpec, ModelSpec, DEFAULT_CONV_FILTERS, DEFAULT_DENSE_UNITS, DEFAULT_DROPOUT};
pub use self::trainer::{
    best_epoch, epochs_to_csv, evaluate, parse_epoch_csv, predict, train, BestModel, EpochMetrics, Evaluation, Trainer,
    TrainingConfig, EPOCH_CSV_HEADER,
};
