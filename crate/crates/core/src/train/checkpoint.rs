//! Versioned checkpoint format.
//!
//! Layout (all headers are single text lines, raw values little-endian):
//!
//! ```text
//! VSTCKPT v1
//! config <nbytes>
//! <run-config TOML bytes>
//! params <count>
//! param <name> <dtype> <d0>x<d1>… <nbytes>
//! <raw values>
//! …
//! opt adam <step> <count>        (or: opt none)
//! moment <name> <m|v> <nbytes>
//! <raw values>
//! …
//! end
//! ```
//!
//! Shared storages are serialised once under their canonical name and
//! re-linked on load by model construction, so round trips are bit-exact
//! and preserve sharing.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::autodiff::{Dtype, Elem};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::model::VstModel;

use super::adam::AdamState;

const MAGIC: &str = "VSTCKPT v1";

pub struct LoadedCheckpoint<T: Elem> {
    pub model: VstModel<T>,
    pub optimizer: Option<AdamState<T>>,
    pub run_config: RunConfig,
}

fn write_values<T: Elem>(out: &mut Vec<u8>, values: &[T]) {
    for &v in values {
        v.write_le(out);
    }
    out.push(b'\n');
}

pub fn save_checkpoint<T: Elem>(
    model: &VstModel<T>,
    optimizer: Option<&AdamState<T>>,
    run_config: &RunConfig,
    path: &Path,
) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC.as_bytes());
    out.push(b'\n');

    let config_text = run_config.to_toml();
    out.extend_from_slice(format!("config {}\n", config_text.len()).as_bytes());
    out.extend_from_slice(config_text.as_bytes());
    out.push(b'\n');

    let mut seen = HashSet::new();
    let unique: Vec<_> =
        model.params().iter().filter(|p| seen.insert(p.storage_id())).collect();
    out.extend_from_slice(format!("params {}\n", unique.len()).as_bytes());
    for p in unique {
        let shape =
            p.shape().iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x");
        let values = p.value();
        out.extend_from_slice(
            format!(
                "param {} {} {} {}\n",
                p.name(),
                T::DTYPE.name(),
                shape,
                values.len() * T::DTYPE.size_bytes()
            )
            .as_bytes(),
        );
        write_values(&mut out, &values);
    }

    match optimizer {
        None => out.extend_from_slice(b"opt none\n"),
        Some(state) => {
            let moments: Vec<_> = state.moments().collect();
            out.extend_from_slice(
                format!("opt adam {} {}\n", state.step_count(), moments.len()).as_bytes(),
            );
            for (name, m, v) in moments {
                for (tag, buf) in [("m", m), ("v", v)] {
                    out.extend_from_slice(
                        format!("moment {name} {tag} {}\n", buf.len() * T::DTYPE.size_bytes())
                            .as_bytes(),
                    );
                    write_values(&mut out, buf);
                }
            }
        }
    }
    out.extend_from_slice(b"end\n");
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn line(&mut self) -> Result<&'a str> {
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
            self.pos += 1;
        }
        if self.pos >= self.bytes.len() {
            return Err(Error::format(self.path, "truncated checkpoint: missing line terminator"));
        }
        let line = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::format(self.path, "non-utf8 header line"))?;
        self.pos += 1;
        Ok(line)
    }

    fn raw(&mut self, len: usize) -> Result<&'a [u8]> {
        let chunk = self
            .bytes
            .get(self.pos..self.pos + len)
            .ok_or_else(|| Error::format(self.path, "truncated checkpoint: raw block cut short"))?;
        self.pos += len;
        if self.bytes.get(self.pos) != Some(&b'\n') {
            return Err(Error::format(self.path, "malformed checkpoint: missing raw terminator"));
        }
        self.pos += 1;
        Ok(chunk)
    }
}

fn decode_values<T: Elem>(raw: &[u8]) -> Vec<T> {
    raw.chunks_exact(T::DTYPE.size_bytes()).map(T::read_le).collect()
}

pub fn load_checkpoint<T: Elem>(path: &Path) -> Result<LoadedCheckpoint<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor { bytes: &bytes, pos: 0, path };
    let bad = |msg: String| Error::format(path, msg);

    let magic = cur.line()?;
    if magic != MAGIC {
        return Err(bad(format!("unsupported checkpoint version {magic:?} (want {MAGIC:?})")));
    }

    let config_header = cur.line()?;
    let config_len: usize = config_header
        .strip_prefix("config ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad(format!("bad config header {config_header:?}")))?;
    let config_text = String::from_utf8(cur.raw(config_len)?.to_vec())
        .map_err(|_| bad("non-utf8 config block".into()))?;
    let run_config = RunConfig::from_toml(&config_text)?;

    let model = VstModel::<T>::new(&run_config.model, 0)?;
    let by_name: std::collections::HashMap<&str, _> =
        model.params().iter().map(|p| (p.name(), p)).collect();

    let params_header = cur.line()?;
    let count: usize = params_header
        .strip_prefix("params ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad(format!("bad params header {params_header:?}")))?;

    let mut assigned: HashSet<u64> = HashSet::new();
    for _ in 0..count {
        let header = cur.line()?;
        let mut fields = header.split(' ');
        let (tag, name, dtype, shape, nbytes) = (
            fields.next(),
            fields.next(),
            fields.next(),
            fields.next(),
            fields.next(),
        );
        if tag != Some("param") {
            return Err(bad(format!("expected param record, got {header:?}")));
        }
        let name = name.ok_or_else(|| bad("param record missing name".into()))?;
        let dtype = dtype
            .and_then(Dtype::parse)
            .ok_or_else(|| bad(format!("param {name}: bad dtype")))?;
        if dtype != T::DTYPE {
            return Err(bad(format!(
                "param {name}: dtype {} does not match requested {}",
                dtype.name(),
                T::DTYPE.name()
            )));
        }
        let shape: Vec<usize> = shape
            .unwrap_or("")
            .split('x')
            .map(|d| d.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(format!("param {name}: bad shape")))?;
        let nbytes: usize = nbytes
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(format!("param {name}: bad byte length")))?;
        let values = decode_values::<T>(cur.raw(nbytes)?);

        let param = by_name
            .get(name)
            .ok_or_else(|| bad(format!("param {name} not present in the configured model")))?;
        if param.shape() != shape.as_slice() || param.numel() != values.len() {
            return Err(bad(format!(
                "param {name}: shape {shape:?} does not match model shape {:?}",
                param.shape()
            )));
        }
        param.set_value(&values);
        assigned.insert(param.storage_id());
    }

    let unique_total = {
        let mut seen = HashSet::new();
        model.params().iter().filter(|p| seen.insert(p.storage_id())).count()
    };
    if assigned.len() != unique_total {
        return Err(bad(format!(
            "checkpoint covers {} of {} parameter storages",
            assigned.len(),
            unique_total
        )));
    }

    let opt_header = cur.line()?;
    let optimizer = if opt_header == "opt none" {
        None
    } else if let Some(rest) = opt_header.strip_prefix("opt adam ") {
        let mut fields = rest.split(' ');
        let step: u64 = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad optimizer step".into()))?;
        let count: usize = fields
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad optimizer entry count".into()))?;
        let mut state = AdamState::new(model.params());
        state.set_step(step);
        for _ in 0..count {
            let mut read_moment = |want_tag: &str| -> Result<(String, Vec<T>)> {
                let header = cur.line()?;
                let mut fields = header.split(' ');
                if fields.next() != Some("moment") {
                    return Err(bad(format!("expected moment record, got {header:?}")));
                }
                let name = fields
                    .next()
                    .ok_or_else(|| bad("moment record missing name".into()))?
                    .to_string();
                let tag = fields.next().unwrap_or("");
                if tag != want_tag {
                    return Err(bad(format!("moment {name}: expected {want_tag}, got {tag}")));
                }
                let nbytes: usize = fields
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad(format!("moment {name}: bad byte length")))?;
                Ok((name, decode_values::<T>(cur.raw(nbytes)?)))
            };
            let (name, m) = read_moment("m")?;
            let (name_v, v) = read_moment("v")?;
            if name_v != name {
                return Err(bad(format!("moment pair mismatch: {name} vs {name_v}")));
            }
            if !state.restore_moment(&name, m, v) {
                return Err(bad(format!("moment {name} does not match the configured model")));
            }
        }
        Some(state)
    } else {
        return Err(bad(format!("bad optimizer header {opt_header:?}")));
    };

    if cur.line()? != "end" {
        return Err(bad("missing end marker".into()));
    }

    Ok(LoadedCheckpoint { model, optimizer, run_config })
}
