//! Checkpoint round-trip and sharing-preservation tests.

use vst_core::autodiff::Tensor;
use vst_core::config::{DataConfig, RunConfig, TrainConfig};
use vst_core::data::{LabelCodec, RawImage};
use vst_core::model::{ModelConfig, Variant, VstModel};
use vst_core::train::{
    load_checkpoint, save_checkpoint, train, AdamState, TrainSource,
};
use vst_core::Error;

fn run_config(variant: Variant) -> RunConfig {
    RunConfig {
        model: ModelConfig::tiny(variant),
        train: TrainConfig {
            batch_size: 2,
            max_steps: 3,
            eval_every: 0,
            log_every: 0,
            seed: 5,
            ..TrainConfig::default()
        },
        data: DataConfig {
            image_height: 16,
            image_width: 24,
            sources: vec![],
            eval_manifest: None,
            augment: false,
        },
    }
}

fn tiny_source() -> TrainSource {
    let codec = LabelCodec::new(4);
    let mut source = TrainSource::empty(1.0, 16, 24);
    for (i, label) in ["1", "2a", "b3", "40"].iter().enumerate() {
        let gray: Vec<u8> = (0..20 * 12).map(|p| ((p * (i + 3)) % 256) as u8).collect();
        source.push(RawImage::from_gray(20, 12, &gray), label, &codec);
    }
    source
}

fn probe_image() -> Tensor<f32> {
    let data: Vec<f64> =
        (0..3 * 16 * 24).map(|i| ((i * 37 + 11) % 255) as f64 / 127.5 - 1.0).collect();
    Tensor::<f32>::from_f64s(&[1, 3, 16, 24], &data)
}

#[test]
fn save_load_forward_is_bit_exact_including_optimizer_state() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = run_config(Variant::Full);
    let model = VstModel::<f32>::new(&cfg.model, 5).unwrap();
    let source = tiny_source();
    train(&model, std::slice::from_ref(&source), &cfg).unwrap();

    let img = probe_image();
    let before = model.forward(&img, false);

    let path = dir.path().join("model.vstckpt");
    let mut adam = AdamState::new(model.params());
    adam.step(model.params(), 0.0); // touch so step counter is nonzero
    save_checkpoint(&model, Some(&adam), &cfg, &path).unwrap();

    let loaded = load_checkpoint::<f32>(&path).unwrap();
    let after = loaded.model.forward(&img, false);
    assert_eq!(before.logits_s2.data(), after.logits_s2.data());
    assert_eq!(before.logits_s3.data(), after.logits_s3.data());
    assert_eq!(
        before.logits_final.as_ref().unwrap().data(),
        after.logits_final.as_ref().unwrap().data()
    );

    let opt = loaded.optimizer.expect("optimizer state restored");
    assert_eq!(opt.step_count(), adam.step_count());
    let saved: Vec<_> = adam.moments().collect();
    let restored: Vec<_> = opt.moments().collect();
    assert_eq!(saved.len(), restored.len());
    for ((n1, m1, v1), (n2, m2, v2)) in saved.iter().zip(&restored) {
        assert_eq!(n1, n2);
        assert_eq!(m1, m2);
        assert_eq!(v1, v2);
    }

    // a second save of the loaded model is byte-identical
    let path2 = dir.path().join("model2.vstckpt");
    save_checkpoint(&loaded.model, Some(&opt), &loaded.run_config, &path2).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
}

#[test]
fn truncated_checkpoint_is_a_clean_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = run_config(Variant::Basic);
    let model = VstModel::<f32>::new(&cfg.model, 1).unwrap();
    let path = dir.path().join("model.vstckpt");
    save_checkpoint(&model, None, &cfg, &path).unwrap();

    let bytes = std::fs::read(&path).unwrap();
    let cut = dir.path().join("cut.vstckpt");
    std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
    match load_checkpoint::<f32>(&cut) {
        Err(Error::Format { .. }) => {}
        other => panic!("expected format error, got {:?}", other.err()),
    }

    // version mismatch is named explicitly
    let mut wrong = bytes.clone();
    wrong[8] = b'9';
    let bad = dir.path().join("bad.vstckpt");
    std::fs::write(&bad, wrong).unwrap();
    match load_checkpoint::<f32>(&bad) {
        Err(Error::Format { message, .. }) => {
            assert!(message.contains("version"), "message: {message}")
        }
        other => panic!("expected version error, got {:?}", other.err()),
    }
}

#[test]
fn dtype_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = run_config(Variant::Basic);
    let model = VstModel::<f32>::new(&cfg.model, 2).unwrap();
    let path = dir.path().join("model.vstckpt");
    save_checkpoint(&model, None, &cfg, &path).unwrap();
    match load_checkpoint::<f64>(&path) {
        Err(Error::Format { message, .. }) => assert!(message.contains("dtype")),
        other => panic!("expected dtype error, got {:?}", other.err()),
    }
}

#[test]
fn alignment_projection_stays_shared_after_reload() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = run_config(Variant::Basic);
    let model = VstModel::<f32>::new(&cfg.model, 3).unwrap();
    let path = dir.path().join("model.vstckpt");
    save_checkpoint(&model, None, &cfg, &path).unwrap();
    let loaded = load_checkpoint::<f32>(&path).unwrap().model;

    // zero the registry's handle; both call sites must observe it
    let q = loaded.params().iter().find(|p| p.name() == "align.q").unwrap();
    assert_eq!(q.storage_id(), loaded.alignment().storage_id());
    q.set_value(&vec![0.0; q.numel()]);

    let trace = loaded.forward(&probe_image(), false);
    let uniform = 1.0f32 / 12.0;
    for &a in trace.attn_primary.data() {
        assert!((a - uniform).abs() < 1e-6);
    }
    for &a in trace.attn_secondary.data() {
        assert!((a - uniform).abs() < 1e-6);
    }
}
