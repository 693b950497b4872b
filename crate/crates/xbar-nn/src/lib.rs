//! DNN mapping, inference and retraining on resistive crossbar models.
//!
//! Networks lower to matrix products via patch unrolling; mappable layers
//! program differential conductance pairs onto crossbar tiles, and inference
//! runs the DAC → array → ADC pipeline per tile with digital partial-sum
//! accumulation. Retraining keeps full-precision shadow weights: the forward
//! pass is crossbar-abstracted, the backward pass is floating point with
//! straight-through treatment of quantizers and non-idealities.

pub mod error;
pub mod im2col;
pub mod layers;
pub mod network;

pub use error::{Error, Result};
pub use layers::{LayerSpec, NetworkSpec};
pub use network::{accuracy, softmax_cross_entropy, Network};
