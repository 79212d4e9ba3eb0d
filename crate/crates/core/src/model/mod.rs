//! The assembled visual-semantic transformer.
//!
//! Forward dataflow: convolutional features → visual transformer → shared
//! alignment (primary semantics) → interaction transformer over the joined
//! semantic+visual sequence → shared alignment again (tertiary semantics)
//! → classifier heads, plus the optional semantic fusion module of the
//! full variant. Decoding is parallel: one forward pass predicts all
//! character slots at once.

mod census;
mod config;
mod decode;
mod vst;

pub use census::{Census, CensusEntry};
pub use config::{ModelConfig, Variant};
pub use decode::{decode, DecodeMode, TextPrediction};
pub use vst::{ForwardTrace, VstModel};
