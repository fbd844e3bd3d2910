//! Minimal tensor, layer, loss and optimizer kernel.
//!
//! Layers implement their own backward passes; correctness is pinned by
//! finite-difference checks in [`gradcheck`].

pub mod act;
pub mod adam;
pub mod checkpoint;
pub mod conv;
pub mod dense;
pub mod gradcheck;
pub mod loss;
pub mod lstm;
pub mod param;
pub mod sampling;
pub mod tensor;

pub use adam::{clip_grad_norm, optimizer_step, AdamConfig, AdamState};
pub use checkpoint::{Container, NamedTensor};
pub use conv::{Conv2d, ConvTranspose2d};
pub use dense::Dense;
pub use gradcheck::grad_check;
pub use lstm::{lstm_step, Lstm, LstmState};
pub use param::{Module, Param};
pub use sampling::{argmax, categorical_sample};
pub use tensor::Tensor;
