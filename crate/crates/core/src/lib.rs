//! Conditional unrolled reconstruction for undersampled parallel MRI.

pub mod autodiff;
pub mod conditioning;
pub mod config;
pub mod data;
pub mod dc;
pub mod denoiser;
pub mod error;
pub mod evaluation;
pub mod mri;
pub mod real;
pub mod tensor;
pub mod training;
pub mod unrolled;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use real::Real;
pub use tensor::Tensor;
