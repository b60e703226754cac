//! File formats, data preparation and the command-line pipeline built on
//! `gesture-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bvh;
pub mod ckptfile;
pub mod config;
pub mod demo;
pub mod embfile;
pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod transcript;
pub mod wav;

pub use error::{Error, Result};
