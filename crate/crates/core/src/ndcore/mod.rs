//! Dense `f64` tensors, a recording tape for reverse-mode gradients, and Adam.
//!
//! Everything here is row-major and 64-bit. Matrix-valued ops take `[rows, cols]`
//! tensors; biases and layer-norm affine parameters are rank-1 `[cols]`.

mod adam;
mod checkpoint;
mod error;
pub mod kernels;
mod ops;
mod params;
mod tape;
mod tensor;

pub use adam::{adam_step, clip_global_norm, AdamConfig, AdamState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use error::NdError;
pub use ops::{elementwise, layer_norm, matmul_add, sigmoid, tanh, Elementwise, LAYER_NORM_EPS};
pub use params::ParamSet;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub type Result<T> = std::result::Result<T, NdError>;
