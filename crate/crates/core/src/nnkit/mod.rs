//! Small differentiable-compute kit: dense, convolution, ReLU, dropout,
//! residual, reshape and concat layers with hand-written backward passes,
//! Adam with cosine annealing, and finite-difference checking.

pub mod checkpoint;
mod conv;
pub mod gradcheck;
mod layer;
pub(crate) mod linalg;
mod network;
pub mod optim;
mod tensor;

pub use checkpoint::{Checkpoint, MatrixRecord, NetworkRecord};
pub use layer::{Layer, LayerSpec, Mode, Param};
pub use network::{Gradients, Network, Trace};
pub use optim::{cosine_lr, Adam, AdamConfig, CosineSchedule, EpochRecord};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
