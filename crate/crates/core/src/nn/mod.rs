//! Feed-forward approximator with explicit reverse-mode gradients and Adam.

mod adam;
pub mod codec;
mod mlp;

pub use adam::{Adam, AdamConfig};
pub use mlp::{Activation, ForwardTrace, LayerShape, Mlp};
