//! Cluster-based tile embeddings and two-step level generation.
//!
//! The numeric kernels are generic over [`Scalar`]; the aliases below fix
//! the two widths used in practice (`f64` for checks, `f32` for training).

pub mod agent;
pub mod clustering;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod features;
pub mod generation;
pub mod io;
pub mod metrics;
pub mod neuralkit;
pub mod scalar;

pub use error::{CteError, Result};
pub use scalar::Scalar;

pub type Tensor64 = neuralkit::Tensor<f64>;
pub type Tensor32 = neuralkit::Tensor<f32>;
