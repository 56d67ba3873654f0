//! Dense f64 tensors, a reverse-mode tape, Adam, and CLV1 checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod graph;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use graph::{Graph, NodeId};
pub use tensor::Tensor;
