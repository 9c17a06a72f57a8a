//! Single-frame artifact reduction and super resolution.
//!
//! A small convolutional network upscales the luma plane (trained in an
//! over-parameterised form, collapsed for inference, optionally grouped and
//! fixed-point quantised) while chroma goes through a classic interpolator.
//! Non-integer scale factors run the network at the largest integer factor
//! that fits and finish with a Lanczos stage.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below name the common instantiations.

mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod quant;
pub mod scalar;
pub mod tensor;
pub mod train;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use model::{forward, param_count, Form, Layer, ModelConfig, WeightSet};
pub use pipeline::{plan, upscale_frame, ChromaMethod, Frame, FramePlan, NetWeights, Network, Resolution};
pub use quant::{QuantParams, QuantizedModel};
pub use scalar::Scalar;
pub use tensor::{ConvWeights, Shape, Tensor};
pub use train::{LossKind, LossSpec, TrainConfig};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type ConvWeights32 = ConvWeights<f32>;
pub type WeightSet32 = WeightSet<f32>;
pub type WeightSet64 = WeightSet<f64>;
pub type Frame32 = Frame<f32>;
pub type QuantizedModel32 = QuantizedModel<f32>;
pub type Network32 = Network<f32>;
