//! `vst` — dataset generation, training, evaluation, inference and the
//! parameter census behind one binary.
//!
//! Exit codes are a stable scripting contract: 0 success, 2 config or
//! usage errors, 3 I/O errors, 4 numeric failures.

mod commands;
mod overrides;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use vst_core::Error;

#[derive(Parser)]
#[command(name = "vst", version, about = "Visual-semantic transformer for scene text recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic glyph dataset from a spec file.
    GenData {
        /// Dataset spec (TOML).
        #[arg(long)]
        spec: PathBuf,
        /// Output directory for images, manifest and spec echo.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model from a run configuration.
    Train {
        /// Run configuration (TOML) with model/train/data sections.
        #[arg(long)]
        config: PathBuf,
        /// Override any config key, e.g. `--set train.max_steps=500`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        /// Shorthand for `--set model.variant=…`.
        #[arg(long)]
        variant: Option<String>,
        /// Shorthand for `--set train.seed=…`.
        #[arg(long)]
        seed: Option<u64>,
        /// Shorthand for `--set train.checkpoint_dir=…`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint over a manifest.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Decoding mode: s2, s3, vote or full.
        #[arg(long, default_value = "vote")]
        mode: String,
    },
    /// Recognise one image; optionally export attention heatmaps.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        /// PNM image (P5 or P6).
        #[arg(long)]
        image: PathBuf,
        /// Directory for per-character heatmap overlays.
        #[arg(long)]
        dump_attention: Option<PathBuf>,
        /// Decoding mode; defaults to the variant's natural mode.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Print the parameter table of a config or checkpoint.
    Census {
        #[arg(long, conflicts_with = "checkpoint")]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Contract(_) => 2,
        Error::Io { .. } | Error::Format { .. } => 3,
        Error::Numeric(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData { spec, out } => commands::gen_data(&spec, &out),
        Command::Train { config, sets, variant, seed, out } => {
            commands::train(&config, &sets, variant.as_deref(), seed, out.as_deref())
        }
        Command::Eval { checkpoint, manifest, mode } => {
            commands::eval(&checkpoint, &manifest, &mode)
        }
        Command::Infer { checkpoint, image, dump_attention, mode } => {
            commands::infer(&checkpoint, &image, dump_attention.as_deref(), mode.as_deref())
        }
        Command::Census { config, checkpoint } => {
            commands::census(config.as_deref(), checkpoint.as_deref())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
