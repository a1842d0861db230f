//! Sampling-frequency-independent source separation.
//!
//! An STFT encoder whose frame length is fixed in seconds, a compressed and
//! whitened feature path, a fully-convolutional mask estimator whose
//! parameters do not depend on the number of frequency bins, and the
//! training, transfer and evaluation machinery around them.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod audio;
pub mod data;
pub mod error;
pub mod features;
pub mod kernels;
pub mod filterbank;
pub mod linalg;
pub mod loss;
pub mod metrics;
pub mod network;
pub mod optim;
pub mod pipeline;
pub mod real;
pub mod tensor;

pub use audio::AudioBuffer;
pub use error::{Error, Result};
pub use real::Real;
