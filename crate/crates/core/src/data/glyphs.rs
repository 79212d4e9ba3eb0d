//! Deterministic synthetic glyph-text dataset generator.
//!
//! Renders random strings with the built-in 5×7 bitmap font onto light
//! canvases: dark glyphs, per-glyph scale and spacing jitter, optional
//! additive Gaussian noise. Every byte of the output is a pure function of
//! the spec, so regenerating into a fresh directory reproduces it exactly.
//! Samples are derived from per-index seeds and could be rendered in any
//! order or in parallel without changing the result.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::font::{glyph_pixel, glyph_rows, GLYPH_COLS, GLYPH_ROWS};
use super::manifest::write_manifest;
use super::pnm::write_pgm;

const MARGIN: usize = 3;
const BACKGROUND: u8 = 255;
const INK: u8 = 0;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlyphDatasetSpec {
    pub seed: u64,
    pub num_samples: usize,
    /// Alphanumeric characters the labels draw from.
    pub charset: String,
    pub length_min: usize,
    pub length_max: usize,
    pub canvas_height: usize,
    /// Additive Gaussian noise in gray levels (0 disables).
    #[serde(default)]
    pub noise_std: f64,
    /// Inter-glyph spacing jitter in ± pixels (0 disables).
    #[serde(default)]
    pub spacing_jitter: usize,
    /// Per-glyph scale jitter as a ± fraction of the base scale (0 disables).
    #[serde(default)]
    pub scale_jitter: f64,
}

impl GlyphDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.charset.is_empty() {
            return Err(Error::Config("glyph spec: charset is empty".into()));
        }
        if let Some(bad) = self.charset.chars().find(|c| glyph_rows(*c).is_none()) {
            return Err(Error::Config(format!(
                "glyph spec: character {bad:?} is not alphanumeric"
            )));
        }
        if self.length_min == 0 || self.length_min > self.length_max {
            return Err(Error::Config(format!(
                "glyph spec: invalid length range {}..={}",
                self.length_min, self.length_max
            )));
        }
        if self.num_samples == 0 {
            return Err(Error::Config("glyph spec: num_samples is zero".into()));
        }
        if self.canvas_height < GLYPH_ROWS + 2 * MARGIN {
            return Err(Error::Config(format!(
                "glyph spec: canvas height {} below minimum {}",
                self.canvas_height,
                GLYPH_ROWS + 2 * MARGIN
            )));
        }
        if !(0.0..=1.0).contains(&self.scale_jitter) {
            return Err(Error::Config("glyph spec: scale_jitter outside [0, 1]".into()));
        }
        if self.noise_std < 0.0 {
            return Err(Error::Config("glyph spec: negative noise_std".into()));
        }
        Ok(())
    }

    fn base_scale(&self) -> f64 {
        ((self.canvas_height - 2 * MARGIN) / GLYPH_ROWS).max(1) as f64
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ (index as u64).wrapping_mul(0x9E3779B97F4A7C15)))
}

struct Placement {
    ch: char,
    x: usize,
    width: usize,
    height: usize,
}

/// Render one sample; returns (label, grayscale pixels, width, height).
fn render_sample(spec: &GlyphDatasetSpec, index: usize) -> (String, Vec<u8>, usize, usize) {
    let mut rng = sample_rng(spec.seed, index);
    let chars: Vec<char> = spec.charset.chars().collect();
    let len = rng.gen_range(spec.length_min..=spec.length_max);
    let label: String = (0..len).map(|_| chars[rng.gen_range(0..chars.len())]).collect();

    let base = spec.base_scale();
    let base_spacing = base.round() as i64;

    let mut placements = Vec::with_capacity(len);
    let mut x = MARGIN as i64;
    for (i, ch) in label.chars().enumerate() {
        let scale = if spec.scale_jitter > 0.0 {
            base * (1.0 + rng.gen_range(-spec.scale_jitter..=spec.scale_jitter))
        } else {
            base
        };
        let width = ((GLYPH_COLS as f64 * scale).round() as usize).max(GLYPH_COLS);
        let height =
            (((GLYPH_ROWS as f64 * scale).round() as usize).max(GLYPH_ROWS)).min(spec.canvas_height);
        placements.push(Placement { ch, x: x.max(0) as usize, width, height });
        x += width as i64;
        if i + 1 < len {
            let jitter = if spec.spacing_jitter > 0 {
                rng.gen_range(-(spec.spacing_jitter as i64)..=spec.spacing_jitter as i64)
            } else {
                0
            };
            x += (base_spacing + jitter).max(0);
        }
    }
    let canvas_w = (x.max(0) as usize + MARGIN).max(2 * MARGIN + GLYPH_COLS);
    let canvas_h = spec.canvas_height;

    let mut pixels = vec![BACKGROUND; canvas_w * canvas_h];
    for p in &placements {
        let rows = glyph_rows(p.ch).expect("validated charset");
        let top = (canvas_h - p.height) / 2;
        for gy in 0..p.height {
            let src_row = gy * GLYPH_ROWS / p.height;
            for gx in 0..p.width {
                let src_col = gx * GLYPH_COLS / p.width;
                if glyph_pixel(&rows, src_col, src_row) {
                    let (px, py) = (p.x + gx, top + gy);
                    if px < canvas_w && py < canvas_h {
                        pixels[py * canvas_w + px] = INK;
                    }
                }
            }
        }
    }

    if spec.noise_std > 0.0 {
        let normal = Normal::new(0.0, spec.noise_std).expect("validated noise std");
        for px in pixels.iter_mut() {
            let v = *px as f64 + normal.sample(&mut rng);
            *px = v.clamp(0.0, 255.0).round() as u8;
        }
    }

    (label, pixels, canvas_w, canvas_h)
}

/// Generate the dataset under `out_dir`: one PGM per sample, a tab-separated
/// manifest, and the spec echoed as `spec.toml`. Returns the manifest path.
pub fn generate_glyph_dataset(spec: &GlyphDatasetSpec, out_dir: &Path) -> Result<PathBuf> {
    spec.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut entries = Vec::with_capacity(spec.num_samples);
    for i in 0..spec.num_samples {
        let (label, pixels, w, h) = render_sample(spec, i);
        let name = format!("{i:06}.pgm");
        write_pgm(&out_dir.join(&name), w, h, &pixels)?;
        entries.push((name, label));
    }

    let manifest_path = out_dir.join("manifest.tsv");
    write_manifest(&manifest_path, &entries)?;

    let spec_text = toml::to_string(spec).expect("spec serialises");
    let spec_path = out_dir.join("spec.toml");
    fs::write(&spec_path, spec_text).map_err(|e| Error::io(&spec_path, e))?;

    Ok(manifest_path)
}
