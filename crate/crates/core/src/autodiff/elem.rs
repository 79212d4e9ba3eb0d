//! Scalar element types usable inside tensors.

use std::fmt::{Debug, Display};

/// Element type tag, used by checkpoint records and error messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn size_bytes(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }

    pub fn parse(s: &str) -> Option<Dtype> {
        match s {
            "f32" => Some(Dtype::F32),
            "f64" => Some(Dtype::F64),
            _ => None,
        }
    }
}

/// Tensor element scalar. 32-bit is the training default; 64-bit is
/// required on gradient-check paths where finite differences need the
/// extra precision.
pub trait Elem:
    num_traits::Float + Debug + Display + Default + Send + Sync + 'static
{
    const DTYPE: Dtype;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// Append the little-endian byte representation to `out`.
    fn write_le(self, out: &mut Vec<u8>);
    /// Decode from exactly `DTYPE.size_bytes()` little-endian bytes.
    fn read_le(buf: &[u8]) -> Self;
}

impl Elem for f32 {
    const DTYPE: Dtype = Dtype::F32;

    fn from_f64(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(buf: &[u8]) -> Self {
        f32::from_le_bytes(buf.try_into().expect("f32 needs 4 bytes"))
    }
}

impl Elem for f64 {
    const DTYPE: Dtype = Dtype::F64;

    fn from_f64(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(buf: &[u8]) -> Self {
        f64::from_le_bytes(buf.try_into().expect("f64 needs 8 bytes"))
    }
}
