//! Subcommand implementations.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use vst_core::align::attention_heatmap;
use vst_core::autodiff::Tensor;
use vst_core::data::{
    batch_images, generate_glyph_dataset, preprocess_image, read_pnm, write_pgm,
    GlyphDatasetSpec, LabelCodec,
};
use vst_core::model::{decode, Census, DecodeMode, ModelConfig, Variant, VstModel};
use vst_core::train::{
    default_decode_mode, evaluate, load_checkpoint, load_source, train as run_training,
    LoadedCheckpoint,
};
use vst_core::{Error, Result};

use crate::overrides::load_run_config;

pub fn gen_data(spec_path: &Path, out_dir: &Path) -> Result<()> {
    if !spec_path.is_file() {
        return Err(Error::Config(format!("spec file not found: {}", spec_path.display())));
    }
    let text = fs::read_to_string(spec_path).map_err(|e| Error::io(spec_path, e))?;
    let spec: GlyphDatasetSpec =
        toml::from_str(&text).map_err(|e| Error::Config(format!("spec parse: {e}")))?;
    let manifest = generate_glyph_dataset(&spec, out_dir)?;
    println!("manifest: {}", manifest.display());
    println!("samples: {}", spec.num_samples);
    Ok(())
}

pub fn train(
    config_path: &Path,
    sets: &[String],
    variant: Option<&str>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<()> {
    let mut sets = sets.to_vec();
    if let Some(v) = variant {
        Variant::from_str(v)?; // validate early for a clear message
        sets.push(format!("model.variant={v}"));
    }
    if let Some(s) = seed {
        sets.push(format!("train.seed={s}"));
    }
    if let Some(dir) = out {
        sets.push(format!("train.checkpoint_dir=\"{}\"", dir.display()));
    }
    let run_config = load_run_config(config_path, &sets)?;

    if run_config.data.sources.is_empty() {
        return Err(Error::Config("config has no training sources".into()));
    }
    let base = config_path.parent().unwrap_or(Path::new("."));
    let codec = LabelCodec::new(run_config.model.t);
    let mut sources = Vec::with_capacity(run_config.data.sources.len());
    for src in &run_config.data.sources {
        let manifest = base.join(&src.manifest);
        if !manifest.is_file() {
            return Err(Error::Config(format!("manifest not found: {}", manifest.display())));
        }
        sources.push(load_source(
            &manifest,
            src.weight,
            run_config.data.image_height,
            run_config.data.image_width,
            &codec,
        )?);
    }

    let model = VstModel::<f32>::new(&run_config.model, run_config.train.seed)?;
    let outcome = run_training(&model, &sources, &run_config)?;
    println!("steps run: {}", outcome.steps_run);
    if let Some(step) = outcome.lr_dropped_at {
        println!("learning rate dropped at step {step}");
    }
    if let Some(report) = &outcome.final_report {
        print!("{}", report.to_table());
    }
    if let Some(path) = &outcome.checkpoint_path {
        println!("checkpoint: {}", path.display());
    }
    Ok(())
}

fn open_checkpoint(path: &Path) -> Result<LoadedCheckpoint<f32>> {
    if !path.is_file() {
        return Err(Error::Config(format!("checkpoint not found: {}", path.display())));
    }
    load_checkpoint::<f32>(path)
}

pub fn eval(checkpoint: &Path, manifest: &Path, mode: &str) -> Result<()> {
    let mode = DecodeMode::from_str(mode)?;
    let loaded = open_checkpoint(checkpoint)?;
    if !manifest.is_file() {
        return Err(Error::Config(format!("manifest not found: {}", manifest.display())));
    }
    let report = evaluate(
        &loaded.model,
        manifest,
        mode,
        loaded.run_config.data.image_height,
        loaded.run_config.data.image_width,
        loaded.run_config.train.batch_size,
    )?;
    print!("{}", report.to_table());
    println!("{}", serde_json::to_string(&report).expect("report serialises"));
    Ok(())
}

pub fn infer(
    checkpoint: &Path,
    image: &Path,
    dump_attention: Option<&Path>,
    mode: Option<&str>,
) -> Result<()> {
    let loaded = open_checkpoint(checkpoint)?;
    let mode = match mode {
        Some(m) => DecodeMode::from_str(m)?,
        None => default_decode_mode(loaded.model.config().variant),
    };
    let raw = read_pnm(image)?;
    let (h, w) = (loaded.run_config.data.image_height, loaded.run_config.data.image_width);
    let tensor: Tensor<f32> = preprocess_image(&raw, h, w);
    let batch = batch_images(std::slice::from_ref(&tensor));
    let trace = loaded.model.forward(&batch, false);
    let prediction = decode(&trace, mode)?.remove(0);
    println!("{}", prediction.text);

    if let Some(dir) = dump_attention {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        // grayscale base image in [0,255] for the overlay
        let gray: Vec<f64> = (0..h * w)
            .map(|i| {
                let px = |ch: usize| (tensor.data()[ch * h * w + i] as f64 + 1.0) * 127.5;
                (px(0) + px(1) + px(2)) / 3.0
            })
            .collect();
        let sites: [(&str, &Vec<Vec<f64>>); 3] = [
            ("align1", &prediction.attn_primary),
            ("align2", &prediction.attn_secondary),
            ("interact", &prediction.interaction),
        ];
        for (pos, ch) in prediction.text.chars().enumerate() {
            for (site, rows) in &sites {
                let heat = attention_heatmap(&rows[pos], trace.grid, (h, w));
                let overlay: Vec<u8> = heat
                    .iter()
                    .zip(&gray)
                    .map(|(hv, gv)| (0.5 * gv + 0.5 * hv * 255.0).round().clamp(0.0, 255.0) as u8)
                    .collect();
                let path = dir.join(format!("{site}_{pos}_{ch}.pnm"));
                write_pgm(&path, w, h, &overlay)?;
            }
        }
        println!("heatmaps: {} files in {}", 3 * prediction.text.chars().count(), dir.display());
    }
    Ok(())
}

pub fn census(config: Option<&Path>, checkpoint: Option<&Path>) -> Result<()> {
    match (config, checkpoint) {
        (Some(path), None) => {
            if !path.is_file() {
                return Err(Error::Config(format!("config file not found: {}", path.display())));
            }
            let run_config = load_run_config(path, &[])?;
            let model = VstModel::<f32>::new(&run_config.model, run_config.train.seed)?;
            let table = Census::of(&model);
            print!("{}", table.to_table());

            // delta between the full and basic twins of this config
            let mut full_cfg = run_config.model.clone();
            full_cfg.variant = Variant::Full;
            let mut basic_cfg = full_cfg.clone();
            basic_cfg.variant = Variant::Basic;
            let full_total = census_total(&full_cfg)?;
            let basic_total = census_total(&basic_cfg)?;
            println!("variant totals: full {full_total}, basic {basic_total}");
            println!("delta (full - basic): {}", full_total - basic_total);
            Ok(())
        }
        (None, Some(path)) => {
            let loaded = open_checkpoint(path)?;
            print!("{}", Census::of(&loaded.model).to_table());
            Ok(())
        }
        _ => Err(Error::Config("census needs exactly one of --config or --checkpoint".into())),
    }
}

fn census_total(cfg: &ModelConfig) -> Result<usize> {
    Ok(Census::of(&VstModel::<f32>::new(cfg, 0)?).total())
}
