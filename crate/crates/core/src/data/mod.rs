//! Data pipeline: label codec, image loading and preprocessing, the
//! synthetic glyph dataset generator, manifests and the weighted
//! multi-source sampler.

mod codec;
mod font;
mod glyphs;
mod image;
mod manifest;
mod pnm;
mod sampler;

pub use codec::{LabelCodec, CHARSET_SIZE, EOS_INDEX, UNK_INDEX};
pub use font::{glyph_rows, GLYPH_COLS, GLYPH_ROWS};
pub use glyphs::{generate_glyph_dataset, GlyphDatasetSpec};
pub use image::{batch_images, bilinear_resize, preprocess_image};
pub use manifest::{read_manifest, write_manifest};
pub use pnm::{read_pnm, write_pgm, RawImage};
pub use sampler::WeightedSampler;
