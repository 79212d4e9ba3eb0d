//! Minimal binary PNM reader/writer: P6 (RGB) and P5 (grayscale, loaded
//! replicated to three channels), 8-bit only.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// A decoded image, always three interleaved 8-bit channels.
#[derive(Debug, Clone)]
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl RawImage {
    pub fn from_gray(width: usize, height: usize, gray: &[u8]) -> Self {
        assert_eq!(gray.len(), width * height);
        let mut rgb = Vec::with_capacity(gray.len() * 3);
        for &g in gray {
            rgb.extend_from_slice(&[g, g, g]);
        }
        RawImage { width, height, rgb }
    }

    pub fn luma(&self) -> Vec<u8> {
        self.rgb
            .chunks(3)
            .map(|px| ((px[0] as u32 + px[1] as u32 + px[2] as u32) / 3) as u8)
            .collect()
    }
}

/// Whitespace/comment-aware header token scanner.
fn next_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    while *pos < bytes.len() {
        let b = bytes[*pos];
        if b == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else if b.is_ascii_whitespace() {
            *pos += 1;
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if *pos > start {
        Some(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    } else {
        None
    }
}

pub fn read_pnm(path: &Path) -> Result<RawImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::format(path, msg);

    let mut pos = 0;
    let magic = next_token(&bytes, &mut pos).ok_or_else(|| bad("missing magic"))?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(bad(&format!("unsupported PNM magic {other:?} (want P5 or P6)"))),
    };
    let parse_dim = |tok: Option<String>, what: &str| -> Result<usize> {
        tok.and_then(|t| t.parse::<usize>().ok())
            .filter(|&v| v > 0)
            .ok_or_else(|| bad(&format!("invalid {what}")))
    };
    let width = parse_dim(next_token(&bytes, &mut pos), "width")?;
    let height = parse_dim(next_token(&bytes, &mut pos), "height")?;
    let maxval = parse_dim(next_token(&bytes, &mut pos), "maxval")?;
    if maxval != 255 {
        return Err(bad(&format!("unsupported maxval {maxval} (want 255)")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;

    let need = width * height * channels;
    let raster = bytes.get(pos..pos + need).ok_or_else(|| {
        bad(&format!("truncated raster: need {need} bytes, have {}", bytes.len().saturating_sub(pos)))
    })?;

    Ok(if channels == 1 {
        RawImage::from_gray(width, height, raster)
    } else {
        RawImage { width, height, rgb: raster.to_vec() }
    })
}

pub fn write_pgm(path: &Path, width: usize, height: usize, gray: &[u8]) -> Result<()> {
    assert_eq!(gray.len(), width * height, "pgm dimension error");
    let mut out = Vec::with_capacity(gray.len() + 32);
    write!(out, "P5\n{width} {height}\n255\n").expect("write to vec");
    out.extend_from_slice(gray);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_roundtrip_is_byte_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        let gray: Vec<u8> = (0..12).map(|i| (i * 20) as u8).collect();
        write_pgm(&path, 4, 3, &gray).unwrap();
        let img = read_pnm(&path).unwrap();
        assert_eq!((img.width, img.height), (4, 3));
        assert_eq!(img.luma(), gray);
    }

    #[test]
    fn p6_with_comment_parses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ppm");
        let mut bytes = b"P6\n# a comment\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[10, 20, 30, 40, 50, 60]);
        std::fs::write(&path, bytes).unwrap();
        let img = read_pnm(&path).unwrap();
        assert_eq!((img.width, img.height), (2, 1));
        assert_eq!(img.rgb, vec![10, 20, 30, 40, 50, 60]);
    }

    #[test]
    fn truncated_file_is_a_clean_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.pgm");
        std::fs::write(&path, b"P5\n4 4\n255\nxy").unwrap();
        match read_pnm(&path) {
            Err(crate::Error::Format { .. }) => {}
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_an_io_error() {
        match read_pnm(Path::new("/nonexistent/image.pgm")) {
            Err(crate::Error::Io { .. }) => {}
            other => panic!("expected io error, got {other:?}"),
        }
    }
}
