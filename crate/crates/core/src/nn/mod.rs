//! Minimal CPU neural-network layer stack with hand-written backward passes.

pub mod conv;
pub mod network;
pub mod optim;
pub mod tensor;

pub use conv::ConvSpec;
pub use network::{Gradients, LayerSpec, Network, Param, Tape};
pub use optim::{Adam, AdamState};
pub use tensor::{Shape, Tensor};
