//! Losses, datasets, optimization and rollout.

mod dataset;
mod losses;
mod optim;
mod rollout;
mod train;

pub use dataset::{
    gen_ac_dataset, gen_dendrite_dataset, physics_entries, physics_from_entries, sample_ac_ic, sample_grain_centers,
    AcDatasetSpec, Dataset, DendriteDatasetSpec, IcFamily, Sample,
};
pub use losses::{
    loss_data, loss_data_grad, loss_deepritz_ac, loss_deepritz_ac_grad, loss_deepritz_dendrite,
    loss_deepritz_dendrite_grad, loss_scheme_residual, loss_scheme_residual_grad, scheme_residual,
};
pub use optim::Adam;
pub use rollout::{reference_ac, reference_dendrite, rollout_ac, rollout_dendrite, Rollout};
pub use train::{
    batch_loss, model_inputs, sample_loss, train, write_history_csv, HistoryRow, LossKind, TrainConfig, TrainOutcome,
};

use thiserror::Error;

use crate::allen_cahn::AcError;
use crate::dendrite::DendriteError;
use crate::metrics::MetricsError;
use crate::neural::{ModelWeights, NeuralError};
use crate::FieldError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, weights: Box<ModelWeights> },
    #[error("network produced a non-finite prediction")]
    NonFinitePrediction,
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    AllenCahn(#[from] AcError),
    #[error(transparent)]
    Dendrite(#[from] DendriteError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
