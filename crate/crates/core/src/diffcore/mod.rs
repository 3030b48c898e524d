//! Layer primitives with explicit forward/backward passes and an Adam optimizer.

pub mod activation;
pub mod attention;
pub mod conv;
pub mod gradcheck;
pub mod linear;
pub mod params;
pub mod reparam;
pub mod tensor;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward, softmax, softmax_backward};
pub use attention::{
    multi_head_attention, multi_head_attention_backward, MhaCache, MhaGrads, MhaWeights,
    MultiHeadAttention,
};
pub use conv::{block_output_hw, conv2d_block, conv2d_block_backward, ConvBlock, ConvCache};
pub use linear::{linear, linear_backward, Linear, LinearGrads};
pub use params::{AdamConfig, Param, ParamId, ParamSet};
pub use reparam::{reparameterize, reparameterize_backward};
pub use tensor::{Real, Tensor};
