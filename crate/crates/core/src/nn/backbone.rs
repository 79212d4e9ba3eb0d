//! Resnet-style convolutional feature extractor.
//!
//! Stem conv + four layers of basic residual blocks (two 3×3 convs with an
//! identity or 1×1-projection shortcut). No normalisation layers; He init
//! and the training loop's gradient clipping keep the desk-scale stack
//! stable. The full preset turns B×3×48×160 images into B×512×6×40 maps
//! (height ÷8, width ÷4).

use serde::{Deserialize, Serialize};

use crate::autodiff::conv::conv2d;
use crate::autodiff::{ops, Elem, Parameter, Tensor};

use super::init::ParamBuilder;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneConfig {
    pub stem_channels: usize,
    pub block_counts: [usize; 4],
    pub channels: [usize; 4],
    /// (stride_h, stride_w) of each layer's first block.
    pub strides: [(usize, usize); 4],
    pub out_dim: usize,
}

impl BackboneConfig {
    /// Full-scale preset: blocks 1/2/5/3, widths up to 512, ÷8 height and
    /// ÷4 width.
    pub fn full() -> Self {
        BackboneConfig {
            stem_channels: 64,
            block_counts: [1, 2, 5, 3],
            channels: [64, 128, 256, 512],
            strides: [(2, 2), (2, 2), (2, 1), (1, 1)],
            out_dim: 512,
        }
    }

    /// Small preset with the same ÷8/÷4 stride schedule, one block per
    /// layer and widths scaled toward `out_dim`.
    pub fn toy(out_dim: usize) -> Self {
        let c = |frac: usize| (out_dim * frac / 4).max(2);
        BackboneConfig {
            stem_channels: c(1),
            block_counts: [1, 1, 1, 1],
            channels: [c(1), c(2), c(3), out_dim],
            strides: [(2, 2), (2, 2), (2, 1), (1, 1)],
            out_dim,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.channels[3] != self.out_dim {
            return Err(crate::Error::Config(format!(
                "backbone output dim {} must equal last layer width {}",
                self.out_dim, self.channels[3]
            )));
        }
        if self.block_counts.contains(&0) {
            return Err(crate::Error::Config("backbone layers need at least one block".into()));
        }
        Ok(())
    }

    pub fn total_stride(&self) -> (usize, usize) {
        self.strides.iter().fold((1, 1), |(h, w), &(sh, sw)| (h * sh, w * sw))
    }

    /// Spatial size of the feature map for a given image size.
    pub fn output_hw(&self, img_h: usize, img_w: usize) -> (usize, usize) {
        let (sh, sw) = self.total_stride();
        assert!(
            img_h % sh == 0 && img_w % sw == 0 && img_h / sh > 0 && img_w / sw > 0,
            "backbone dimension error: input {img_h}x{img_w} incompatible with stride schedule; \
             expected height divisible by {sh} and width divisible by {sw}"
        );
        (img_h / sh, img_w / sw)
    }
}

struct ConvLayer<T: Elem> {
    w: Parameter<T>,
    b: Parameter<T>,
    stride: (usize, usize),
    pad: (usize, usize),
}

impl<T: Elem> ConvLayer<T> {
    fn new(
        pb: &mut ParamBuilder<T>,
        prefix: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: (usize, usize),
    ) -> Self {
        ConvLayer {
            w: pb.he_conv(&format!("{prefix}.w"), &[out_ch, in_ch, kernel, kernel]),
            b: pb.zeros(&format!("{prefix}.b"), &[out_ch]),
            stride,
            pad: (kernel / 2, kernel / 2),
        }
    }

    fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        conv2d(x, &self.w.leaf(), &self.b.leaf(), self.stride, self.pad)
    }
}

struct BasicBlock<T: Elem> {
    conv1: ConvLayer<T>,
    conv2: ConvLayer<T>,
    proj: Option<ConvLayer<T>>,
}

impl<T: Elem> BasicBlock<T> {
    fn new(
        pb: &mut ParamBuilder<T>,
        prefix: &str,
        in_ch: usize,
        out_ch: usize,
        stride: (usize, usize),
    ) -> Self {
        let proj = if in_ch != out_ch || stride != (1, 1) {
            Some(ConvLayer::new(pb, &format!("{prefix}.proj"), in_ch, out_ch, 1, stride))
        } else {
            None
        };
        BasicBlock {
            conv1: ConvLayer::new(pb, &format!("{prefix}.conv1"), in_ch, out_ch, 3, stride),
            conv2: ConvLayer::new(pb, &format!("{prefix}.conv2"), out_ch, out_ch, 3, (1, 1)),
            proj,
        }
    }

    fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        let y = self.conv2.forward(&ops::relu(&self.conv1.forward(x)));
        let shortcut = match &self.proj {
            Some(p) => p.forward(x),
            None => x.clone(),
        };
        ops::relu(&ops::add(&y, &shortcut))
    }
}

pub struct Backbone<T: Elem> {
    stem: ConvLayer<T>,
    layers: Vec<Vec<BasicBlock<T>>>,
    cfg: BackboneConfig,
}

impl<T: Elem> Backbone<T> {
    pub fn new(pb: &mut ParamBuilder<T>, prefix: &str, cfg: &BackboneConfig) -> Self {
        cfg.validate().expect("invalid backbone config");
        let stem = ConvLayer::new(pb, &format!("{prefix}.stem"), 3, cfg.stem_channels, 3, (1, 1));
        let mut layers = Vec::with_capacity(4);
        let mut in_ch = cfg.stem_channels;
        for l in 0..4 {
            let out_ch = cfg.channels[l];
            let mut blocks = Vec::with_capacity(cfg.block_counts[l]);
            for bi in 0..cfg.block_counts[l] {
                let stride = if bi == 0 { cfg.strides[l] } else { (1, 1) };
                blocks.push(BasicBlock::new(
                    pb,
                    &format!("{prefix}.layer{l}.block{bi}"),
                    in_ch,
                    out_ch,
                    stride,
                ));
                in_ch = out_ch;
            }
            layers.push(blocks);
        }
        Backbone { stem, layers, cfg: cfg.clone() }
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.cfg
    }

    /// Images \[B×3×H×W\] → local feature maps \[B×d×h×w\].
    pub fn forward(&self, images: &Tensor<T>) -> Tensor<T> {
        assert!(
            images.ndim() == 4 && images.shape()[1] == 3,
            "backbone dimension error: expected [B,3,H,W] images, got {:?}",
            images.shape()
        );
        // fail early with the expected sizes rather than deep inside a conv
        self.cfg.output_hw(images.shape()[2], images.shape()[3]);

        let mut x = ops::relu(&self.stem.forward(images));
        for layer in &self.layers {
            for block in layer {
                x = block.forward(&x);
            }
        }
        x
    }
}
