//! Core algorithms for speech-driven gesture synthesis.
//!
//! Everything here is `no_std` + `alloc`: skeletal pose handling, audio
//! repair, rate conversion, a small reverse-mode autodiff engine with
//! transformer blocks, contrastive speech/motion pretraining and a
//! conditional denoising diffusion model with classifier-free guidance.
//! File formats and the command-line pipeline live in `gesture-kit`.
#![no_std]
// `!(x > 0.0)` is how argument checks reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod csmp;
pub mod diffusion;
pub mod embedding;
pub mod error;
pub mod math;
pub mod motion;
pub mod nn;
pub mod rng;
pub mod signal;

pub use error::{Error, Result};
