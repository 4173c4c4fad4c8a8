//! Greedy block training, evaluation heads, and the experiment drivers.

pub mod experiments;
pub mod greedy;
pub mod knn;
pub mod optim;
pub mod pipeline;
pub mod probe;

pub use greedy::{build_network, epochs_per_block, train_block, train_greedy, EpochRecord, GreedyOptions};
pub use knn::knn_accuracy;
pub use optim::{scheduled_lr, AdamW, OptimizerState};
pub use probe::{linear_probe, ProbeOptions, ProbeReport};
