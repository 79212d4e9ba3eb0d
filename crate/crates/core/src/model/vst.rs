//! Model assembly, forward pass, and the training objective.

use std::cell::RefCell;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::align::AlignmentWeights;
use crate::autodiff::{ops, Elem, Parameter, Tensor};
use crate::error::{Error, Result};
use crate::nn::{
    sinusoidal_table, Backbone, ClassifierHead, Linear, ParamBuilder, TransformerBlock,
    TransformerBlockConfig,
};

use super::config::{ModelConfig, Variant};

/// Everything one forward pass produces: feature streams, logits per
/// branch, and the captured attention tensors.
pub struct ForwardTrace<T: Elem> {
    /// Primary visual sequence \[B×n×d\].
    pub v1: Tensor<T>,
    /// Primary semantic sequence \[B×t×d\] from the first alignment site.
    pub s1: Tensor<T>,
    /// Secondary visual sequence \[B×n×d\] out of the interaction module.
    pub v2: Tensor<T>,
    /// Secondary semantic sequence \[B×t×d\] out of the interaction module.
    pub s2: Tensor<T>,
    /// Tertiary semantic sequence \[B×t×d\] from the second alignment site.
    pub s3: Tensor<T>,
    pub logits_s2: Tensor<T>,
    pub logits_s3: Tensor<T>,
    /// Fused logits; present only for the full variant.
    pub logits_final: Option<Tensor<T>>,
    /// Alignment attention of the primary site \[B×t×n\].
    pub attn_primary: Tensor<T>,
    /// Alignment attention of the secondary site \[B×t×n\].
    pub attn_secondary: Tensor<T>,
    /// Per-layer interaction attention \[B×heads×(t+n)×(t+n)\]; semantic
    /// tokens occupy the first t positions of the joined sequence.
    pub interaction_attn: Vec<Tensor<T>>,
    /// Graph leaves of the shared alignment projection at each call site;
    /// their post-backward gradients sum to the storage gradient.
    pub q_site_primary: Tensor<T>,
    pub q_site_secondary: Tensor<T>,
    /// Feature-map grid (h, w) with n = h·w.
    pub grid: (usize, usize),
}

impl<T: Elem> ForwardTrace<T> {
    pub fn batch_size(&self) -> usize {
        self.v1.shape()[0]
    }

    /// Head-averaged semantic→visual attention of the last interaction
    /// layer: t rows of n weights for one batch element.
    pub fn semantic_to_visual_attention(&self, batch: usize) -> Vec<Vec<f64>> {
        let attn = self.interaction_attn.last().expect("at least one interaction layer");
        let (heads, joined) = (attn.shape()[1], attn.shape()[2]);
        let t = self.s1.shape()[1];
        let n = joined - t;
        let data = attn.data();
        let mut rows = Vec::with_capacity(t);
        for slot in 0..t {
            let mut row = vec![0.0; n];
            for h in 0..heads {
                let base = ((batch * heads + h) * joined + slot) * joined + t;
                for (j, r) in row.iter_mut().enumerate() {
                    *r += data[base + j].as_f64();
                }
            }
            for r in row.iter_mut() {
                *r /= heads as f64;
            }
            rows.push(row);
        }
        rows
    }

    /// One alignment site's attention rows (t × n) for one batch element.
    pub fn alignment_attention(&self, secondary: bool, batch: usize) -> Vec<Vec<f64>> {
        let attn = if secondary { &self.attn_secondary } else { &self.attn_primary };
        let (t, n) = (attn.shape()[1], attn.shape()[2]);
        (0..t)
            .map(|i| {
                attn.data()[(batch * t + i) * n..(batch * t + i + 1) * n]
                    .iter()
                    .map(|v| v.as_f64())
                    .collect()
            })
            .collect()
    }
}

struct SemanticModule<T: Elem> {
    blocks: Vec<TransformerBlock<T>>,
    head: Linear<T>,
}

pub struct VstModel<T: Elem> {
    cfg: ModelConfig,
    backbone: Backbone<T>,
    visual_blocks: Vec<TransformerBlock<T>>,
    alignment: AlignmentWeights<T>,
    /// Learned position embedding added to the semantic stream.
    pos_semantic: Parameter<T>,
    /// Learned per-stream domain vectors.
    domain_semantic: Parameter<T>,
    domain_visual: Parameter<T>,
    interact_blocks: Vec<TransformerBlock<T>>,
    head: ClassifierHead<T>,
    head_s3: Option<ClassifierHead<T>>,
    semantic: Option<SemanticModule<T>>,
    params: Vec<Parameter<T>>,
    dropout_rng: RefCell<ChaCha8Rng>,
}

impl<T: Elem> VstModel<T> {
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut pb = ParamBuilder::new(seed);
        let block_cfg = TransformerBlockConfig {
            model_dim: cfg.d,
            num_heads: cfg.num_heads,
            ffn_dim: cfg.ffn_dim,
            dropout: cfg.dropout,
        };

        let backbone = Backbone::new(&mut pb, "backbone", &cfg.backbone);
        let visual_blocks = (0..cfg.layers_v)
            .map(|i| TransformerBlock::new(&mut pb, &format!("visual.layer{i}"), block_cfg))
            .collect();
        let alignment = AlignmentWeights::new(&mut pb, "align.q", cfg.t, cfg.d);
        let pos_semantic = pb.gaussian("interact.pos_semantic", &[cfg.t, cfg.d], 0.02);
        let domain_semantic = pb.gaussian("interact.domain_semantic", &[cfg.d], 0.02);
        let domain_visual = pb.gaussian("interact.domain_visual", &[cfg.d], 0.02);
        let interact_blocks = (0..cfg.layers_i)
            .map(|i| TransformerBlock::new(&mut pb, &format!("interact.layer{i}"), block_cfg))
            .collect();
        let head = ClassifierHead::new(&mut pb, "head", cfg.d, cfg.charset_size);
        let head_s3 = if cfg.share_classifier_heads {
            None
        } else {
            Some(ClassifierHead::new(&mut pb, "head_s3", cfg.d, cfg.charset_size))
        };
        let semantic = match cfg.variant {
            Variant::Basic => None,
            Variant::Full => Some(SemanticModule {
                blocks: (0..cfg.layers_s)
                    .map(|i| TransformerBlock::new(&mut pb, &format!("semantic.layer{i}"), block_cfg))
                    .collect(),
                head: Linear::new(&mut pb, "semantic.head", 2 * cfg.d, cfg.charset_size),
            }),
        };

        Ok(VstModel {
            cfg: cfg.clone(),
            backbone,
            visual_blocks,
            alignment,
            pos_semantic,
            domain_semantic,
            domain_visual,
            interact_blocks,
            head,
            head_s3,
            semantic,
            params: pb.into_params(),
            dropout_rng: RefCell::new(ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_D80F)),
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Every registered parameter, in construction order. The shared
    /// alignment projection appears once.
    pub fn params(&self) -> &[Parameter<T>] {
        &self.params
    }

    pub fn alignment(&self) -> &AlignmentWeights<T> {
        &self.alignment
    }

    pub fn zero_grads(&self) {
        for p in &self.params {
            p.zero_grad();
        }
    }

    fn rng(&self, training: bool) -> Option<&RefCell<ChaCha8Rng>> {
        (training && self.cfg.dropout > 0.0).then_some(&self.dropout_rng)
    }

    /// Flatten a feature map \[B×d×h×w\] row-major (h outer, w inner) into
    /// \[B×n×d\] and run the visual transformer stack.
    pub fn visual_encode(&self, fmap: &Tensor<T>, training: bool) -> Tensor<T> {
        assert!(
            fmap.ndim() == 4 && fmap.shape()[1] == self.cfg.d,
            "visual_encode dimension error: feature map {:?}, model dim {}",
            fmap.shape(),
            self.cfg.d
        );
        let (b, d, h, w) = (fmap.shape()[0], fmap.shape()[1], fmap.shape()[2], fmap.shape()[3]);
        let seq = ops::reshape(fmap, &[b, d, h * w]);
        let mut v = ops::permute(&seq, &[0, 2, 1]);
        for block in &self.visual_blocks {
            v = block.forward(&v, self.rng(training)).0;
        }
        v
    }

    /// Mix the semantic and visual streams with joint self-attention.
    ///
    /// The semantic stream receives its learned position embedding and
    /// domain vector, the visual stream a fixed sinusoidal encoding and
    /// its own domain vector; the streams are joined (semantic tokens
    /// first), transformed, and split back.
    pub fn interact(
        &self,
        s1: &Tensor<T>,
        v1: &Tensor<T>,
        training: bool,
    ) -> (Tensor<T>, Tensor<T>, Vec<Tensor<T>>) {
        let d = self.cfg.d;
        assert!(
            s1.ndim() == 3 && v1.ndim() == 3 && s1.shape()[2] == d && v1.shape()[2] == d,
            "interact dimension error: semantic {:?}, visual {:?}, model dim {d}",
            s1.shape(),
            v1.shape()
        );
        let t = s1.shape()[1];
        let n = v1.shape()[1];

        let s_in = ops::add(&ops::add(s1, &self.pos_semantic.leaf()), &self.domain_semantic.leaf());
        let pe_visual = sinusoidal_table::<T>(n, d);
        let v_in = ops::add(&ops::add(v1, &pe_visual), &self.domain_visual.leaf());

        let mut joined = ops::concat(&[&s_in, &v_in], 1);
        let mut attn_layers = Vec::with_capacity(self.interact_blocks.len());
        for block in &self.interact_blocks {
            let (next, attn) = block.forward(&joined, self.rng(training));
            joined = next;
            attn_layers.push(attn);
        }

        let s2 = ops::slice(&joined, 1, 0, t);
        let v2 = ops::slice(&joined, 1, t, t + n);
        (s2, v2, attn_layers)
    }

    /// Fuse the two semantic streams into the final logits (full variant):
    /// sequence-concatenate (s2 first), add a fixed positional encoding of
    /// length 2t, transform, split, channel-concatenate to t×2d and map to
    /// the charset.
    pub fn semantic_fuse(
        &self,
        s2: &Tensor<T>,
        s3: &Tensor<T>,
        training: bool,
    ) -> Result<Tensor<T>> {
        let module = self.semantic.as_ref().ok_or_else(|| {
            Error::Contract("semantic_fuse called on a basic-variant model".into())
        })?;
        let t = self.cfg.t;
        assert!(
            s2.shape() == s3.shape() && s2.ndim() == 3 && s2.shape()[1] == t,
            "semantic_fuse dimension error: s2 {:?}, s3 {:?}",
            s2.shape(),
            s3.shape()
        );

        let mut joined = ops::concat(&[s2, s3], 1);
        joined = ops::add(&joined, &sinusoidal_table::<T>(2 * t, self.cfg.d));
        for block in &module.blocks {
            joined = block.forward(&joined, self.rng(training)).0;
        }
        let a = ops::slice(&joined, 1, 0, t);
        let b = ops::slice(&joined, 1, t, 2 * t);
        let stacked = ops::concat(&[&a, &b], 2);
        Ok(module.head.forward(&stacked))
    }

    /// Run the full dataflow on preprocessed images \[B×3×H×W\]. Both
    /// alignment calls go through the single shared projection storage.
    pub fn forward(&self, images: &Tensor<T>, training: bool) -> ForwardTrace<T> {
        let fmap = self.backbone.forward(images);
        let grid = (fmap.shape()[2], fmap.shape()[3]);

        let v1 = self.visual_encode(&fmap, training);
        let (s1, attn_primary, q_site_primary) = self.alignment.align(&v1);
        let (s2, v2, interaction_attn) = self.interact(&s1, &v1, training);
        let (s3, attn_secondary, q_site_secondary) = self.alignment.align(&v2);

        let logits_s2 = self.head.forward(&s2);
        let logits_s3 = self.head_s3.as_ref().unwrap_or(&self.head).forward(&s3);
        let logits_final = match self.cfg.variant {
            Variant::Basic => None,
            Variant::Full => {
                Some(self.semantic_fuse(&s2, &s3, training).expect("full variant has module"))
            }
        };

        ForwardTrace {
            v1,
            s1,
            v2,
            s2,
            s3,
            logits_s2,
            logits_s3,
            logits_final,
            attn_primary,
            attn_secondary,
            interaction_attn,
            q_site_primary,
            q_site_secondary,
            grid,
        }
    }

    /// Cross-entropy per branch against length-t targets, summed with unit
    /// weights: two branches for the basic variant, three for the full.
    /// `targets` holds B·t class indices (eos-filled padding included).
    pub fn compute_loss(
        &self,
        trace: &ForwardTrace<T>,
        targets: &[usize],
    ) -> (Tensor<T>, Vec<Tensor<T>>) {
        let (b, t, c) = (trace.batch_size(), self.cfg.t, self.cfg.charset_size);
        assert_eq!(
            targets.len(),
            b * t,
            "loss contract error: {} targets for batch {b} × length {t}",
            targets.len()
        );

        let branch = |logits: &Tensor<T>| {
            ops::cross_entropy(&ops::reshape(logits, &[b * t, c]), targets)
        };
        let mut branches = vec![branch(&trace.logits_s2), branch(&trace.logits_s3)];
        if let Some(final_logits) = &trace.logits_final {
            branches.push(branch(final_logits));
        }
        let total = branches[1..]
            .iter()
            .fold(branches[0].clone(), |acc, b| ops::add(&acc, b));
        (total, branches)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::backward;
    use crate::data::{LabelCodec, EOS_INDEX};

    fn image<T: Elem>(b: usize, h: usize, w: usize, seed: u64) -> Tensor<T> {
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(7);
        let data: Vec<f64> = (0..b * 3 * h * w)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64) / ((1u64 << 52) as f64) - 1.0
            })
            .collect();
        Tensor::from_f64s(&[b, 3, h, w], &data)
    }

    fn tiny_model(variant: Variant) -> VstModel<f64> {
        VstModel::new(&ModelConfig::tiny(variant), 42).unwrap()
    }

    #[test]
    fn full_preset_trace_has_the_documented_shapes() {
        let model = VstModel::<f32>::new(&ModelConfig::full_preset(Variant::Full), 0).unwrap();
        let trace = model.forward(&image(2, 48, 160, 1), false);
        assert_eq!(trace.v1.shape(), [2, 240, 512]);
        assert_eq!(trace.s1.shape(), [2, 25, 512]);
        assert_eq!(trace.s2.shape(), [2, 25, 512]);
        assert_eq!(trace.s3.shape(), [2, 25, 512]);
        assert_eq!(trace.logits_s2.shape(), [2, 25, 38]);
        assert_eq!(trace.logits_s3.shape(), [2, 25, 38]);
        assert_eq!(trace.logits_final.as_ref().unwrap().shape(), [2, 25, 38]);
        assert_eq!(trace.attn_primary.shape(), [2, 25, 240]);
        // joined interaction sequence: 25 semantic + 240 visual = 265
        assert_eq!(trace.interaction_attn.len(), 3);
        assert_eq!(trace.interaction_attn[0].shape(), [2, 8, 265, 265]);
        assert_eq!(trace.grid, (6, 40));
    }

    #[test]
    fn zero_depth_visual_encoder_is_a_pure_flatten_transpose() {
        let mut cfg = ModelConfig::tiny(Variant::Basic);
        cfg.layers_v = 0;
        let model = VstModel::<f64>::new(&cfg, 3).unwrap();
        let data: Vec<f64> = (0..48).map(|i| i as f64).collect();
        let fmap = Tensor::from_f64s(&[1, 8, 2, 3], &data);
        let v = model.visual_encode(&fmap, false);
        assert_eq!(v.shape(), [1, 6, 8]);
        let mut sorted_in = fmap.to_f64_vec();
        let mut sorted_out = v.to_f64_vec();
        sorted_in.sort_by(f64::total_cmp);
        sorted_out.sort_by(f64::total_cmp);
        assert_eq!(sorted_in, sorted_out);
        // token (y=0,x=1) channel c comes from fmap[c, 0, 1]
        for c in 0..8 {
            assert_eq!(v.data()[8 + c], fmap.data()[c * 6 + 1]);
        }
    }

    #[test]
    fn interaction_adds_embeddings_then_splits_back() {
        let model = tiny_model(Variant::Basic);
        // zero every interaction transformer weight: blocks reduce to identity
        for p in model.params() {
            if p.name().contains("interact.layer") {
                p.set_value(&vec![0.0; p.numel()]);
            }
        }
        let trace = model.forward(&image(1, 16, 24, 5), false);
        let (t, n, d) = (4, 12, 8);
        assert_eq!(trace.s2.shape(), [1, t, d]);
        assert_eq!(trace.v2.shape(), [1, n, d]);
        assert_eq!(trace.interaction_attn[0].shape(), [1, 2, t + n, t + n]);

        let pos = model.pos_semantic.value();
        let dom_s = model.domain_semantic.value();
        for slot in 0..t {
            for c in 0..d {
                let expected = trace.s1.data()[slot * d + c] + pos[slot * d + c] + dom_s[c];
                let got = trace.s2.data()[slot * d + c];
                assert!((got - expected).abs() < 1e-12, "slot {slot} ch {c}");
            }
        }
        let pe = crate::nn::sinusoidal_table::<f64>(n, d);
        let dom_v = model.domain_visual.value();
        for tok in 0..n {
            for c in 0..d {
                let expected = trace.v1.data()[tok * d + c] + pe.data()[tok * d + c] + dom_v[c];
                let got = trace.v2.data()[tok * d + c];
                assert!((got - expected).abs() < 1e-12, "tok {tok} ch {c}");
            }
        }
    }

    #[test]
    fn every_semantic_slot_attends_across_the_visual_stream() {
        // joint attention: a gradient probe from each s2 row reaches v1
        let model = tiny_model(Variant::Basic);
        let img = image(1, 16, 24, 11);
        for slot in 0..4 {
            model.zero_grads();
            let fmap = model.backbone.forward(&img);
            let v1 = model.visual_encode(&fmap, false);
            let (s1, _, _) = model.alignment.align(&v1);
            let (s2, _, _) = model.interact(&s1, &v1, false);
            let row = ops::slice(&s2, 1, slot, slot + 1);
            backward(&ops::mean_all(&row));
            let v1_grad = v1.grad().expect("visual sequence reached");
            let token_norm: f64 = v1_grad[..8].iter().map(|g| g * g).sum();
            assert!(token_norm > 0.0, "slot {slot} insensitive to first visual token");
        }
    }

    #[test]
    fn semantic_fuse_contract_and_zeroed_head_bias() {
        let model = tiny_model(Variant::Full);
        let trace = model.forward(&image(1, 16, 24, 7), false);
        assert_eq!(trace.logits_final.as_ref().unwrap().shape(), [1, 4, 38]);

        // zero the fusion transformer and head weight, set the bias
        for p in model.params() {
            if p.name().starts_with("semantic.") {
                p.set_value(&vec![0.0; p.numel()]);
            }
        }
        let bias: Vec<f64> = (0..38).map(|i| i as f64 * 0.5).collect();
        model
            .params()
            .iter()
            .find(|p| p.name() == "semantic.head.b")
            .unwrap()
            .set_value(&bias);
        let logits = model.semantic_fuse(&trace.s2, &trace.s3, false).unwrap();
        for row in logits.data().chunks(38) {
            for (got, want) in row.iter().zip(&bias) {
                assert!((got - want).abs() < 1e-12);
            }
        }

        let basic = tiny_model(Variant::Basic);
        match basic.semantic_fuse(&trace.s2, &trace.s3, false) {
            Err(Error::Contract(_)) => {}
            other => panic!("expected contract error, got {:?}", other.map(|t| t.shape().to_vec())),
        }
    }

    #[test]
    fn basic_variant_has_no_final_logits_and_no_semantic_params() {
        let model = tiny_model(Variant::Basic);
        let trace = model.forward(&image(1, 16, 24, 3), false);
        assert!(trace.logits_final.is_none());
        assert!(model.params().iter().all(|p| !p.name().starts_with("semantic.")));
    }

    #[test]
    fn forward_is_bit_deterministic_for_a_fixed_seed() {
        let img = image::<f64>(2, 16, 24, 13);
        let run = || {
            let model = tiny_model(Variant::Full);
            let trace = model.forward(&img, false);
            (
                trace.v1.to_f64_vec(),
                trace.s3.to_f64_vec(),
                trace.logits_final.as_ref().unwrap().to_f64_vec(),
            )
        };
        let (a1, a2, a3) = run();
        let (b1, b2, b3) = run();
        assert_eq!(a1, b1);
        assert_eq!(a2, b2);
        assert_eq!(a3, b3);
    }

    #[test]
    fn loss_has_one_branch_per_head_and_sums_exactly() {
        let codec = LabelCodec::new(4);
        let targets: Vec<usize> = codec.encode("ab");

        let full = tiny_model(Variant::Full);
        let trace = full.forward(&image(1, 16, 24, 17), false);
        let (total, branches) = full.compute_loss(&trace, &targets);
        assert_eq!(branches.len(), 3);
        let sum: f64 = branches.iter().map(|b| b.item()).sum();
        assert!((total.item() - sum).abs() < 1e-9);

        let basic = tiny_model(Variant::Basic);
        let trace = basic.forward(&image(1, 16, 24, 17), false);
        let (_, branches) = basic.compute_loss(&trace, &targets);
        assert_eq!(branches.len(), 2);
    }

    #[test]
    fn perfectly_peaked_logits_drive_the_loss_to_zero() {
        let model = tiny_model(Variant::Full);
        let mut trace = model.forward(&image(1, 16, 24, 19), false);
        let targets = LabelCodec::new(4).encode("7a");
        assert_eq!(targets, vec![7, 10, EOS_INDEX, EOS_INDEX]);

        let mut peaked = vec![0.0f64; 4 * 38];
        for (pos, &t) in targets.iter().enumerate() {
            peaked[pos * 38 + t] = 60.0;
        }
        let logits = Tensor::from_f64s(&[1, 4, 38], &peaked);
        trace.logits_s2 = logits.clone();
        trace.logits_s3 = logits.clone();
        trace.logits_final = Some(logits);
        let (total, _) = model.compute_loss(&trace, &targets);
        assert!(total.item() < 1e-12, "loss {}", total.item());
    }

    #[test]
    fn both_alignment_sites_share_one_storage_and_their_gradients_sum() {
        let model = tiny_model(Variant::Full);
        let trace = model.forward(&image(1, 16, 24, 23), false);
        let targets = LabelCodec::new(4).encode("b4");

        model.zero_grads();
        let (total, _) = model.compute_loss(&trace, &targets);
        backward(&total);

        let q = model.alignment.projection();
        let g1 = trace.q_site_primary.grad().expect("site 1 reached");
        let g2 = trace.q_site_secondary.grad().expect("site 2 reached");
        let combined = q.grad();
        for i in 0..combined.len() {
            assert!((combined[i] - (g1[i] + g2[i])).abs() < 1e-9);
        }
        // non-degeneracy: both sites contribute
        assert!(g1.iter().any(|g| g.abs() > 0.0));
        assert!(g2.iter().any(|g| g.abs() > 0.0));
    }

    #[test]
    fn trace_features_are_finite_and_attention_is_row_stochastic() {
        let model = tiny_model(Variant::Full);
        let trace = model.forward(&image(2, 16, 24, 29), false);
        for feat in [&trace.v1, &trace.s1, &trace.v2, &trace.s2, &trace.s3] {
            assert!(feat.is_finite());
        }
        let check = |t: &Tensor<f64>| {
            let n = *t.shape().last().unwrap();
            for row in t.data().chunks(n) {
                let s: f64 = row.iter().sum();
                assert!((s - 1.0).abs() < 1e-6, "row sums to {s}");
            }
        };
        check(&trace.attn_primary);
        check(&trace.attn_secondary);
        for attn in &trace.interaction_attn {
            check(attn);
        }
    }
}

#[cfg(test)]
mod gradient_flow_tests {
    use super::*;
    use crate::autodiff::backward;
    use crate::data::LabelCodec;

    #[test]
    fn dropping_the_s3_branch_changes_the_shared_projection_gradient() {
        let model = VstModel::<f64>::new(&ModelConfig::tiny(Variant::Basic), 51).unwrap();
        let data: Vec<f64> =
            (0..3 * 16 * 24).map(|i| ((i * 13 + 5) % 251) as f64 / 125.0 - 1.0).collect();
        let img = Tensor::from_f64s(&[1, 3, 16, 24], &data);
        let targets = LabelCodec::new(4).encode("3c");

        let grad_with = |use_s3: bool| {
            model.zero_grads();
            let trace = model.forward(&img, false);
            let (_, branches) = model.compute_loss(&trace, &targets);
            let loss = if use_s3 {
                ops::add(&branches[0], &branches[1])
            } else {
                branches[0].clone()
            };
            backward(&loss);
            model.alignment().projection().grad()
        };
        let full = grad_with(true);
        let without_s3 = grad_with(false);
        let diff: f64 =
            full.iter().zip(&without_s3).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff > 1e-12, "s3 branch contributes nothing to the shared projection");
    }
}

#[cfg(test)]
mod head_sharing_tests {
    use super::*;

    #[test]
    fn separate_classifier_heads_allocate_their_own_storage() {
        let mut cfg = ModelConfig::tiny(Variant::Basic);
        cfg.share_classifier_heads = false;
        let model = VstModel::<f64>::new(&cfg, 12).unwrap();
        let names: Vec<&str> = model.params().iter().map(|p| p.name()).collect();
        assert!(names.contains(&"head.w"));
        assert!(names.contains(&"head_s3.w"));

        let data: Vec<f64> = (0..3 * 16 * 24).map(|i| (i % 97) as f64 / 48.5 - 1.0).collect();
        let trace = model.forward(&Tensor::from_f64s(&[1, 3, 16, 24], &data), false);
        assert_eq!(trace.logits_s3.shape(), [1, 4, 38]);

        // with sharing the s3 branch reuses the head storage
        let shared = VstModel::<f64>::new(&ModelConfig::tiny(Variant::Basic), 12).unwrap();
        assert!(shared.params().iter().all(|p| p.name() != "head_s3.w"));
    }

    #[test]
    fn zero_interaction_layers_are_rejected() {
        let mut cfg = ModelConfig::tiny(Variant::Basic);
        cfg.layers_i = 0;
        assert!(VstModel::<f64>::new(&cfg, 0).is_err());
    }
}
