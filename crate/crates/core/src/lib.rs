//! LightPneumoNet: a dependency-light convolutional network engine for binary
//! chest X-ray classification (NORMAL vs PNEUMONIA).
//!
//! Everything from the convolution kernels to the Adam optimizer is written
//! directly against [`Tensor`]. The crate is organised bottom-up:
//!
//! - [`tensor`]: dense row-major NHWC arrays, generic over `f32`/`f64`.
//! - [`ops`]: forward/backward kernels for conv, max-pool, dense, ReLU, softmax, dropout.
//! - [`optim`]: class-weighted cross-entropy and Adam with weight decay.
//! - [`model`]: the layer stack, shape trace, parameter init, full passes, and
//!   the `LPNW` checkpoint format.
//! - [`data`]: dataset discovery, decoding, preprocessing and augmentation.
//! - [`train`]: training loop, early stopping, evaluation, metrics, gradient checks.

pub mod data;
pub mod error;
pub mod model;
pub mod ops;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Precision, Real, Tensor};
