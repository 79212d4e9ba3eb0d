//! Neural building blocks assembled by the recognizer: resnet-style
//! backbone, pre-LN transformer blocks, positional encodings and the
//! classifier head.

mod attention;
mod backbone;
mod head;
mod init;
mod positional;
mod transformer;

pub use attention::MultiHeadAttention;
pub use backbone::{Backbone, BackboneConfig};
pub use head::ClassifierHead;
pub use init::{LayerNorm, Linear, ParamBuilder};
pub use positional::sinusoidal_table;
pub use transformer::{TransformerBlock, TransformerBlockConfig};
