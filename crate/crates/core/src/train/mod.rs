//! Training and evaluation: Adam, the plateau learning-rate schedule, the
//! training loop, metrics and checkpointing.

mod adam;
mod checkpoint;
mod evaluate;
mod trainer;

pub use adam::{clip_global_norm, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, LoadedCheckpoint};
pub use evaluate::{edit_distance, evaluate, evaluate_source, normalize_text, EvalReport};
pub use trainer::{default_decode_mode, load_source, train, StepRecord, TrainOutcome, TrainSource};
