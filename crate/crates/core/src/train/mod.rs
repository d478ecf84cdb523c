//! Dataset generation, loss, optimization, the training loop, and
//! persistence for the fixed-point operator.

pub mod dataset;
pub mod io;
pub mod opt;
pub mod trainer;

pub use dataset::{generate_dataset, DataGenConfig, Dataset, FamilySampling, SnapshotGroup};
pub use io::{
    dataset_from_bytes, dataset_to_bytes, load_dataset, load_model, model_from_bytes,
    model_to_bytes, save_dataset, save_model,
};
pub use opt::{rel_mse_loss, rel_mse_loss_grad, AdamW, AdamWConfig};
pub use trainer::{history_csv, train, TrainConfig, TrainOutput};
