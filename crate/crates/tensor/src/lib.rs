//! Minimal deterministic tensor library with reverse-mode automatic
//! differentiation.
//!
//! Everything runs on the CPU in f32 with fixed reduction orders, so a
//! fixed seed gives bit-identical results across runs. The op set is
//! exactly what a spectrogram encoder-decoder with a conv+LSTM video
//! branch needs: conv2d / transposed conv / pooling, batch norm, linear,
//! LSTM, elementwise activations, concat/slice/permute plumbing, MSE, and
//! Adam.

pub mod checkpoint;
mod conv;
pub mod error;
pub mod init;
mod linear;
pub mod lstm;
mod norm;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;

pub use error::{Result, TensorError};
pub use lstm::{lstm_forward, LstmVars};
pub use norm::{BnRunning, BN_EPS, BN_MOMENTUM};
pub use optim::Adam;
pub use params::{BufferId, BufferSet, ParamId, ParamSet, Parameter};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
