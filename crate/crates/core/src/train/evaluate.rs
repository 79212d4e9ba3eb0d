//! Evaluation: exact-match sequence accuracy after case-insensitive
//! alphanumeric normalisation, and edit-distance character accuracy.

use std::path::Path;

use serde::Serialize;

use crate::autodiff::Elem;
use crate::data::{batch_images, read_manifest, read_pnm, LabelCodec};
use crate::error::{Error, Result};
use crate::model::{decode, DecodeMode, Variant, VstModel};

use super::trainer::TrainSource;

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub mode: DecodeMode,
    /// Exact match after normalisation, under the requested mode.
    pub sequence_accuracy: f64,
    /// 1 − normalised edit distance, under the requested mode.
    pub char_accuracy: f64,
    /// Sequence accuracy of every mode the variant supports, all computed
    /// from the same forward passes.
    pub per_mode: Vec<(DecodeMode, f64)>,
    pub samples: usize,
    pub skipped: usize,
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "samples {}  skipped {}  mode {}\n",
            self.samples, self.skipped, self.mode
        ));
        out.push_str(&format!("sequence accuracy: {:.4}\n", self.sequence_accuracy));
        out.push_str(&format!("char accuracy:     {:.4}\n", self.char_accuracy));
        for (mode, acc) in &self.per_mode {
            out.push_str(&format!("  {mode:<5} sequence accuracy: {acc:.4}\n"));
        }
        out
    }
}

/// Case-insensitive alphanumeric comparison form.
pub fn normalize_text(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut row = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        row[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            row[j + 1] = sub.min(prev[j + 1] + 1).min(row[j] + 1);
        }
        std::mem::swap(&mut prev, &mut row);
    }
    prev[b.len()]
}

fn char_accuracy(pred: &str, label: &str) -> f64 {
    let max_len = pred.chars().count().max(label.chars().count());
    if max_len == 0 {
        return 1.0;
    }
    1.0 - edit_distance(pred, label) as f64 / max_len as f64
}

fn modes_for(variant: Variant) -> Vec<DecodeMode> {
    match variant {
        Variant::Basic => vec![DecodeMode::S2, DecodeMode::S3, DecodeMode::Vote],
        Variant::Full => {
            vec![DecodeMode::S2, DecodeMode::S3, DecodeMode::Vote, DecodeMode::Full]
        }
    }
}

struct Tally {
    exact: usize,
    char_acc_sum: f64,
}

/// Evaluate already-loaded samples; one forward pass per batch feeds every
/// decode mode. Model parameters are read-only throughout.
pub fn evaluate_source<T: Elem>(
    model: &VstModel<T>,
    source: &TrainSource,
    mode: DecodeMode,
    batch_size: usize,
) -> Result<EvalReport> {
    let modes = modes_for(model.config().variant);
    if !modes.contains(&mode) {
        return Err(Error::Contract(format!(
            "decode mode {mode} unavailable for the {} variant",
            model.config().variant
        )));
    }
    if source.is_empty() {
        return Err(Error::Config("evaluation over an empty sample set".into()));
    }

    let mut tallies: Vec<Tally> =
        modes.iter().map(|_| Tally { exact: 0, char_acc_sum: 0.0 }).collect();
    let mut total = 0usize;

    for chunk_start in (0..source.len()).step_by(batch_size.max(1)) {
        let end = (chunk_start + batch_size.max(1)).min(source.len());
        let images: Vec<_> =
            (chunk_start..end).map(|i| source.image_tensor::<T>(i, None)).collect();
        let batch = batch_images(&images);
        let trace = model.forward(&batch, false);
        for (mi, &m) in modes.iter().enumerate() {
            let preds = decode(&trace, m)?;
            for (pi, pred) in preds.iter().enumerate() {
                let label = normalize_text(&source.texts[chunk_start + pi]);
                let predicted = normalize_text(&pred.text);
                if predicted == label {
                    tallies[mi].exact += 1;
                }
                tallies[mi].char_acc_sum += char_accuracy(&predicted, &label);
            }
        }
        total = end;
    }

    let n = total as f64;
    let headline_idx = modes.iter().position(|&m| m == mode).expect("checked above");
    let headline = &tallies[headline_idx];
    Ok(EvalReport {
        mode,
        sequence_accuracy: headline.exact as f64 / n,
        char_accuracy: headline.char_acc_sum / n,
        per_mode: modes
            .iter()
            .zip(&tallies)
            .map(|(&m, t)| (m, t.exact as f64 / n))
            .collect(),
        samples: total,
        skipped: 0,
    })
}

/// Evaluate a manifest on disk. Unreadable images are recorded, skipped
/// and counted in the report.
pub fn evaluate<T: Elem>(
    model: &VstModel<T>,
    manifest_path: &Path,
    mode: DecodeMode,
    image_h: usize,
    image_w: usize,
    batch_size: usize,
) -> Result<EvalReport> {
    let entries = read_manifest(manifest_path)?;
    if entries.is_empty() {
        return Err(Error::Config(format!("empty manifest {}", manifest_path.display())));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let t = model.config().t;
    let codec = LabelCodec::new(t);
    let mut source = TrainSource::empty(1.0, image_h, image_w);
    let mut skipped = 0usize;
    for (rel, label) in &entries {
        match read_pnm(&base.join(rel)) {
            Ok(img) => source.push(img, label, &codec),
            Err(err) => {
                eprintln!("skipping {rel}: {err}");
                skipped += 1;
            }
        }
    }
    if source.is_empty() {
        return Err(Error::Config(format!(
            "no readable samples in {}",
            manifest_path.display()
        )));
    }
    let mut report = evaluate_source(model, &source, mode, batch_size)?;
    report.skipped = skipped;
    Ok(report)
}
