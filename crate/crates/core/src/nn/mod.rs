//! Small differentiable kernel: dense algebra, graph convolution, gated
//! recurrent cell, actor-critic heads and the Adam update. Every backward
//! pass is written out by hand and checked against finite differences.

pub mod adam;
pub mod gcn;
pub mod heads;
pub mod lstm;
pub mod params;
pub mod tensor;

pub use adam::Adam;
pub use gcn::{gcn_backward_row, gcn_forward, normalize_adjacency, GcnCache};
pub use heads::{actor_critic, actor_critic_backward};
pub use lstm::{recurrent_backward, recurrent_step, CellState, StepCache};
pub use params::{Gradients, ModelShape, PolicyParams, DEFAULT_HIDDEN, PARAM_NAMES};
pub use tensor::{entropy, log_softmax, matmul, sigmoid, softmax, Tensor};
