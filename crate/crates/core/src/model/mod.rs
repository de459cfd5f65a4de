//! Fully-connected target network with hand-written backpropagation and an
//! Adam optimizer.

mod adam;
pub mod checkpoint;
mod network;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use network::{init_network, Activation, ForwardCache, Gradients, Layer, LayerGrads, TargetNetwork};
