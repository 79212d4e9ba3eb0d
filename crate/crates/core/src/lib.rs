//! Visual-semantic transformer (VST) for scene text recognition.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: dense tensors with reverse-mode differentiation and a
//!   finite-difference gradient checker.
//! - [`nn`]: neural building blocks (resnet-style backbone, pre-LN
//!   transformer blocks, positional encodings, classifier head).
//! - [`align`]: the visual-semantic alignment module that converts a
//!   visual sequence into a fixed number of semantic vectors, plus
//!   attention-heatmap rendering.
//! - [`model`]: the assembled VST (basic and full variants), losses,
//!   parallel decoding and the parameter census.
//! - [`data`]: label codec, image preprocessing, a deterministic
//!   synthetic glyph dataset generator and a weighted multi-source
//!   sampler.
//! - [`train`]: Adam, plateau learning-rate schedule, the training
//!   loop, evaluation metrics and checkpointing.

pub mod align;
pub mod autodiff;
pub mod config;
pub mod data;
pub mod error;
pub mod model;
pub mod nn;
pub mod train;

pub use error::{Error, Result};
