//! The training loop: sample → forward → loss → backward → clip → Adam,
//! with a plateau-triggered learning-rate drop, periodic evaluation,
//! line-delimited logging and checkpointing.
//!
//! Plateau rule: an exponential moving average of the loss (decay 0.99)
//! must improve by at least 0.1% within `plateau_patience` steps;
//! otherwise the learning rate drops to `lr_final`, once.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::autodiff::{backward, Elem, Tensor};
use crate::config::RunConfig;
use crate::data::{
    batch_images, bilinear_resize, read_manifest, read_pnm, LabelCodec, RawImage, WeightedSampler,
};
use crate::error::{Error, Result};
use crate::model::{DecodeMode, Variant, VstModel};

use super::adam::{clip_global_norm, AdamState};
use super::checkpoint::save_checkpoint;
use super::evaluate::{evaluate_source, EvalReport};

/// A fully loaded training source: raw images plus encoded labels.
pub struct TrainSource {
    pub raws: Vec<RawImage>,
    pub targets: Vec<Vec<usize>>,
    pub texts: Vec<String>,
    pub weight: f64,
    pub image_h: usize,
    pub image_w: usize,
}

impl TrainSource {
    pub fn empty(weight: f64, image_h: usize, image_w: usize) -> Self {
        TrainSource {
            raws: Vec::new(),
            targets: Vec::new(),
            texts: Vec::new(),
            weight,
            image_h,
            image_w,
        }
    }

    pub fn push(&mut self, img: RawImage, label: &str, codec: &LabelCodec) {
        self.targets.push(codec.encode(label));
        self.texts.push(label.to_string());
        self.raws.push(img);
    }

    pub fn len(&self) -> usize {
        self.raws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raws.is_empty()
    }

    /// Preprocess one sample; with an augmentation generator the width is
    /// jittered ±10% before resizing and mild Gaussian pixel noise is
    /// added.
    pub fn image_tensor<T: Elem>(&self, index: usize, augment: Option<&mut ChaCha8Rng>) -> Tensor<T> {
        let raw = &self.raws[index];
        match augment {
            None => crate::data::preprocess_image(raw, self.image_h, self.image_w),
            Some(rng) => {
                let factor = 1.0 + rng.gen_range(-0.1..=0.1);
                let jittered_w = ((raw.width as f64 * factor).round() as usize).max(1);
                let mut channel_src: Vec<f64> = Vec::new();
                let mut rgb = vec![0u8; jittered_w * raw.height * 3];
                for ch in 0..3 {
                    channel_src.clear();
                    channel_src.extend(raw.rgb.chunks(3).map(|px| px[ch] as f64));
                    let scaled =
                        bilinear_resize(&channel_src, raw.height, raw.width, raw.height, jittered_w);
                    for (i, v) in scaled.iter().enumerate() {
                        rgb[i * 3 + ch] = v.clamp(0.0, 255.0) as u8;
                    }
                }
                let noise = Normal::new(0.0, 4.0).expect("fixed std");
                for px in rgb.iter_mut() {
                    *px = (*px as f64 + noise.sample(rng)).clamp(0.0, 255.0) as u8;
                }
                let jittered = RawImage { width: jittered_w, height: raw.height, rgb };
                crate::data::preprocess_image(&jittered, self.image_h, self.image_w)
            }
        }
    }
}

/// Load one manifest into memory.
pub fn load_source(
    manifest_path: &Path,
    weight: f64,
    image_h: usize,
    image_w: usize,
    codec: &LabelCodec,
) -> Result<TrainSource> {
    let entries = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut source = TrainSource::empty(weight, image_h, image_w);
    for (rel, label) in &entries {
        source.push(read_pnm(&base.join(rel))?, label, codec);
    }
    Ok(source)
}

/// The natural decode mode of a variant: fused logits when present,
/// probability voting otherwise.
pub fn default_decode_mode(variant: Variant) -> DecodeMode {
    match variant {
        Variant::Basic => DecodeMode::Vote,
        Variant::Full => DecodeMode::Full,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub total: f64,
    pub branches: Vec<f64>,
}

pub struct TrainOutcome {
    pub steps_run: usize,
    pub records: Vec<StepRecord>,
    /// Step at which the plateau rule dropped the learning rate.
    pub lr_dropped_at: Option<usize>,
    pub final_report: Option<EvalReport>,
    pub checkpoint_path: Option<PathBuf>,
    pub log_path: Option<PathBuf>,
}

fn dump_nan_batch(
    dir: &Path,
    step: usize,
    draws: &[(usize, usize)],
    sources: &[TrainSource],
    branches: &[f64],
) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format!("nan_batch_step{step}.txt"));
    let mut text = format!("non-finite loss at step {step}; branch losses {branches:?}\n");
    for &(src, idx) in draws {
        text.push_str(&format!("source {src} index {idx} label {:?}\n", sources[src].texts[idx]));
    }
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Train in place. The model must have been constructed with the same
/// seed discipline as the config for runs to be reproducible.
pub fn train<T: Elem>(
    model: &VstModel<T>,
    sources: &[TrainSource],
    run_config: &RunConfig,
) -> Result<TrainOutcome> {
    let cfg = &run_config.train;
    cfg.validate()?;
    if sources.is_empty() || sources.iter().any(|s| s.is_empty()) {
        return Err(Error::Config("training requires at least one non-empty source".into()));
    }

    let mut sampler = WeightedSampler::new(
        &sources.iter().map(|s| (s.len(), s.weight)).collect::<Vec<_>>(),
        cfg.seed,
    )?;
    let mut augment_rng = run_config
        .data
        .augment
        .then(|| ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xA46_0000));

    let mut adam = AdamState::new(model.params());
    let mut lr = cfg.lr_initial;
    let mut ema: Option<f64> = None;
    let mut best_ema = f64::INFINITY;
    let mut stale_steps = 0usize;
    let mut lr_dropped_at = None;

    let checkpoint_dir = cfg.checkpoint_dir.as_ref().map(PathBuf::from);
    let mut log_file = match &checkpoint_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join("train_log.jsonl");
            Some((fs::File::create(&path).map_err(|e| Error::io(&path, e))?, path))
        }
        None => None,
    };

    let t = model.config().t;
    let eval_mode = default_decode_mode(model.config().variant);
    let mut records = Vec::with_capacity(cfg.max_steps);
    let mut steps_run = 0;
    let mut final_report = None;

    for step in 0..cfg.max_steps {
        let draws: Vec<(usize, usize)> = (0..cfg.batch_size).map(|_| sampler.draw()).collect();
        let images: Vec<Tensor<T>> = draws
            .iter()
            .map(|&(src, idx)| sources[src].image_tensor(idx, augment_rng.as_mut()))
            .collect();
        let batch = batch_images(&images);
        let mut targets = Vec::with_capacity(cfg.batch_size * t);
        for &(src, idx) in &draws {
            targets.extend_from_slice(&sources[src].targets[idx]);
        }

        let trace = model.forward(&batch, true);
        let (total, branches) = model.compute_loss(&trace, &targets);
        let loss = total.item().as_f64();
        let branch_losses: Vec<f64> = branches.iter().map(|b| b.item().as_f64()).collect();
        if !loss.is_finite() {
            let dir = checkpoint_dir.clone().unwrap_or_else(std::env::temp_dir);
            let dump = dump_nan_batch(&dir, step, &draws, sources, &branch_losses)?;
            return Err(Error::Numeric(format!(
                "non-finite loss at step {step}; batch dump at {}",
                dump.display()
            )));
        }

        model.zero_grads();
        backward(&total);
        drop(trace);
        clip_global_norm(model.params(), cfg.grad_clip);
        adam.step(model.params(), lr);

        // plateau detection on the smoothed loss
        let smoothed = match ema {
            None => loss,
            Some(prev) => 0.99 * prev + 0.01 * loss,
        };
        ema = Some(smoothed);
        if lr_dropped_at.is_none() {
            if smoothed < best_ema * 0.999 {
                best_ema = smoothed;
                stale_steps = 0;
            } else {
                stale_steps += 1;
                if stale_steps >= cfg.plateau_patience {
                    lr = cfg.lr_final;
                    lr_dropped_at = Some(step);
                }
            }
        }

        let record = StepRecord { step, lr, total: loss, branches: branch_losses };
        if let Some((file, path)) = &mut log_file {
            let line = serde_json::to_string(&record).expect("record serialises");
            writeln!(file, "{line}").map_err(|e| Error::io(&*path, e))?;
        }
        records.push(record);
        steps_run = step + 1;

        if cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0 {
            let report = evaluate_source(model, &sources[0], eval_mode, cfg.batch_size)?;
            if cfg.log_every > 0 {
                eprintln!(
                    "step {:>5}  lr {:.1e}  loss {:.4}  train seq acc {:.4}",
                    step + 1,
                    lr,
                    loss,
                    report.sequence_accuracy
                );
            }
            if let Some(dir) = &checkpoint_dir {
                save_checkpoint(model, Some(&adam), run_config, &dir.join("model.vstckpt"))?;
            }
            let reached =
                cfg.target_accuracy.is_some_and(|want| report.sequence_accuracy >= want);
            final_report = Some(report);
            if reached {
                break;
            }
        }
    }

    if final_report.is_none() && cfg.eval_every > 0 {
        final_report = Some(evaluate_source(model, &sources[0], eval_mode, cfg.batch_size)?);
    }

    let checkpoint_path = match &checkpoint_dir {
        Some(dir) => {
            let path = dir.join("model.vstckpt");
            save_checkpoint(model, Some(&adam), run_config, &path)?;
            let echo = dir.join("config.toml");
            fs::write(&echo, run_config.to_toml()).map_err(|e| Error::io(&echo, e))?;
            Some(path)
        }
        None => None,
    };

    Ok(TrainOutcome {
        steps_run,
        records,
        lr_dropped_at,
        final_report,
        checkpoint_path,
        log_path: log_file.map(|(_, path)| path),
    })
}
