//! Minimal dense-network toolkit: layers, manual backpropagation, Adam.
//!
//! Everything runs in `f64` on `ndarray` so that input gradients can be
//! checked against finite differences at tight tolerances.

mod adam;
mod mlp;
mod ops;

pub use adam::{Adam, AdamSettings};
pub use mlp::{Activation, BatchNorm, ForwardCache, Gradients, Layer, LayerGrad, Mlp, MlpBuilder};
pub use ops::{argmax_rows, cross_entropy_with_grad, log_sigmoid, sigmoid, softmax_rows};
