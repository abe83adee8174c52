//! Differentiable layers, the four operator architectures, initialization,
//! checkpoints and finite-difference gradient checks.

mod arch;
mod checkpoint;
mod gradcheck;
mod graph;
mod layers;
mod tensor;

pub use arch::{
    forward_fno, forward_prescribed_rdno, forward_rdno, forward_unet, init_weights, prescribed_reaction, Activation,
    ArchitectureSpec, ForwardCache, Model, ModelWeights, ParamTensor, UnetSpec,
};
pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use graph::{Gradients, Tape};
pub use layers::{
    activation_backward, activation_forward, conv2d_periodic, conv2d_periodic_backward, conv_transpose2d_periodic,
    conv_transpose2d_periodic_backward, spectral_conv, spectral_conv_backward, ConvGrads, SpectralGrads,
};
pub use tensor::Tensor4;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid architecture: {0}")]
    InvalidSpec(String),
    #[error("weights do not match the architecture: {0}")]
    WeightMismatch(String),
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
