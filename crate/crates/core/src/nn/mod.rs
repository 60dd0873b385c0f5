//! Minimal neural-network engine: valid 3×3 convolutions, dense layers,
//! ReLU, softmax / cross-entropy, backprop over fixed layer stacks, Adam and
//! the weights container.

pub mod activation;
pub mod adam;
pub mod conv;
pub mod dense;
pub mod network;
pub mod serialize;
pub mod tensor;

pub use activation::{cross_entropy, log_softmax, relu, relu_backward, softmax, softmax_cross_entropy, LossGrad};
pub use adam::{lr_schedule, AdamState, TrainConfig};
pub use conv::{ConvCache, ConvGrads, ConvLayerParams};
pub use dense::{DenseGrads, DenseLayerParams};
pub use network::{ForwardCache, Layer, ParamGrads, Sequential};
pub use serialize::NamedTensor;
pub use tensor::Tensor;
