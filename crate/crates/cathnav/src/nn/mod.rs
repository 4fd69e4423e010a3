//! Minimal f64 neural-network substrate on ndarray: named parameter storage,
//! manually differentiated layers, and Adam.

pub mod adam;
pub mod init;
pub mod layers;
pub mod tensors;

pub use adam::{clip_grad_norm, Adam, AdamConfig};
pub use layers::{
    causal_mask, gelu, gelu_grad, relu, sigmoid, softmax_rows, softmax_rows_vjp, Dropout,
    EncoderLayer, EncoderLayerCache, LayerNorm, Linear, LnCache, Mha, MhaCache, LN_EPS,
};
pub use tensors::TensorMap;
