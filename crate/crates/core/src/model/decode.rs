//! Parallel decoding: per-position distributions from one forward trace.

use serde::{Deserialize, Serialize};

use crate::autodiff::{ops, Elem, Tensor};
use crate::data::LabelCodec;
use crate::error::{Error, Result};

use super::vst::ForwardTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    /// Secondary semantics (interaction output).
    S2,
    /// Tertiary semantics (second alignment).
    S3,
    /// Probability voting: mean of the s2 and s3 softmax distributions.
    Vote,
    /// Fused logits of the full variant.
    Full,
}

impl std::fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DecodeMode::S2 => "s2",
            DecodeMode::S3 => "s3",
            DecodeMode::Vote => "vote",
            DecodeMode::Full => "full",
        })
    }
}

impl std::str::FromStr for DecodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s2" => Ok(DecodeMode::S2),
            "s3" => Ok(DecodeMode::S3),
            "vote" => Ok(DecodeMode::Vote),
            "full" => Ok(DecodeMode::Full),
            other => {
                Err(Error::Config(format!("unknown decode mode {other:?} (want s2|s3|vote|full)")))
            }
        }
    }
}

/// Decoded text with its per-position distributions and the attention
/// maps captured for visualization.
#[derive(Debug, Clone)]
pub struct TextPrediction {
    pub text: String,
    /// t rows of charset-size probabilities.
    pub probs: Vec<Vec<f64>>,
    /// Alignment attention (t × n) of the primary site.
    pub attn_primary: Vec<Vec<f64>>,
    /// Alignment attention (t × n) of the secondary site.
    pub attn_secondary: Vec<Vec<f64>>,
    /// Head-averaged semantic→visual interaction attention (t × n).
    pub interaction: Vec<Vec<f64>>,
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        // strict comparison: ties break toward the lowest index
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Decode every batch element of a trace. One forward pass feeds all
/// modes; the prediction is a pure function of the trace, so no output
/// position can depend on previously decoded characters.
pub fn decode<T: Elem>(trace: &ForwardTrace<T>, mode: DecodeMode) -> Result<Vec<TextPrediction>> {
    let probs_of = |logits: &Tensor<T>| ops::softmax(logits, 2);
    let distribution = match mode {
        DecodeMode::S2 => probs_of(&trace.logits_s2),
        DecodeMode::S3 => probs_of(&trace.logits_s3),
        DecodeMode::Vote => {
            let p2 = probs_of(&trace.logits_s2);
            let p3 = probs_of(&trace.logits_s3);
            ops::scale(&ops::add(&p2, &p3), 0.5)
        }
        DecodeMode::Full => {
            let logits = trace.logits_final.as_ref().ok_or_else(|| {
                Error::Contract("decode mode `full` requires the full variant".into())
            })?;
            probs_of(logits)
        }
    };

    let (b, t, c) = (
        distribution.shape()[0],
        distribution.shape()[1],
        distribution.shape()[2],
    );
    let codec = LabelCodec::new(t);
    let data = distribution.data();

    let mut out = Vec::with_capacity(b);
    for batch in 0..b {
        let probs: Vec<Vec<f64>> = (0..t)
            .map(|pos| {
                data[(batch * t + pos) * c..(batch * t + pos + 1) * c]
                    .iter()
                    .map(|v| v.as_f64())
                    .collect()
            })
            .collect();
        let indices: Vec<usize> = probs.iter().map(|row| argmax(row)).collect();
        out.push(TextPrediction {
            text: codec.decode(&indices),
            probs,
            attn_primary: trace.alignment_attention(false, batch),
            attn_secondary: trace.alignment_attention(true, batch),
            interaction: trace.semantic_to_visual_attention(batch),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::EOS_INDEX;
    use crate::model::{ModelConfig, Variant, VstModel};

    fn trace_with_logits(
        variant: Variant,
        s2: Vec<f64>,
        s3: Vec<f64>,
    ) -> (VstModel<f64>, ForwardTrace<f64>) {
        let model = VstModel::<f64>::new(&ModelConfig::tiny(variant), 7).unwrap();
        let img = Tensor::<f64>::zeros(&[1, 3, 16, 24]);
        let mut trace = model.forward(&img, false);
        let t = 4;
        trace.logits_s2 = Tensor::from_f64s(&[1, t, 38], &s2);
        trace.logits_s3 = Tensor::from_f64s(&[1, t, 38], &s3);
        (model, trace)
    }

    fn peaked(rows: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; rows.len() * 38];
        for (pos, &cls) in rows.iter().enumerate() {
            out[pos * 38 + cls] = 40.0;
        }
        out
    }

    #[test]
    fn s2_mode_reads_the_s2_branch_and_truncates_at_eos() {
        // logits favouring "ab" then eos
        let s2 = peaked(&[10, 11, EOS_INDEX, EOS_INDEX]);
        let s3 = peaked(&[0, 0, 0, 0]);
        let (_, trace) = trace_with_logits(Variant::Basic, s2, s3);
        let pred = decode(&trace, DecodeMode::S2).unwrap();
        assert_eq!(pred.len(), 1);
        assert_eq!(pred[0].text, "ab");
        assert_eq!(pred[0].probs.len(), 4);
        assert_eq!(pred[0].probs[0].len(), 38);
    }

    #[test]
    fn vote_averages_the_two_branch_distributions() {
        // position 0: s2 puts 0.6 on class 3, s3 puts 0.9 on class 5; the
        // averaged distribution must pick class 5
        let spread = |peak_class: usize, p: f64| {
            let mut row = vec![((1.0 - p) / 37.0).ln(); 38];
            row[peak_class] = p.ln();
            row
        };
        let mut s2 = vec![0.0; 4 * 38];
        let mut s3 = vec![0.0; 4 * 38];
        s2[..38].copy_from_slice(&spread(3, 0.6));
        s3[..38].copy_from_slice(&spread(5, 0.9));
        for pos in 1..4 {
            s2[pos * 38 + EOS_INDEX] = 40.0;
            s3[pos * 38 + EOS_INDEX] = 40.0;
        }
        let (_, trace) = trace_with_logits(Variant::Basic, s2.clone(), s3.clone());
        let pred = decode(&trace, DecodeMode::Vote).unwrap();

        // independent recomputation of the averaged distribution
        let softmax_row = |row: &[f64]| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
            let z: f64 = exps.iter().sum();
            exps.into_iter().map(|e| e / z).collect::<Vec<f64>>()
        };
        let p2 = softmax_row(&s2[..38]);
        let p3 = softmax_row(&s3[..38]);
        assert!((p2[3] - 0.6).abs() < 1e-12);
        assert!((p3[5] - 0.9).abs() < 1e-12);
        let avg: Vec<f64> = p2.iter().zip(&p3).map(|(a, b)| (a + b) / 2.0).collect();
        for (got, want) in pred[0].probs[0].iter().zip(&avg) {
            assert!((got - want).abs() < 1e-9);
        }
        let best = avg.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
        assert_eq!(best, 5);
        assert_eq!(pred[0].text, "5");
    }

    #[test]
    fn all_eos_prediction_is_the_empty_string() {
        let rows = peaked(&[EOS_INDEX; 4]);
        let (_, trace) = trace_with_logits(Variant::Basic, rows.clone(), rows);
        let pred = decode(&trace, DecodeMode::Vote).unwrap();
        assert_eq!(pred[0].text, "");
    }

    #[test]
    fn full_mode_on_basic_variant_is_a_contract_error() {
        let rows = peaked(&[0; 4]);
        let (_, trace) = trace_with_logits(Variant::Basic, rows.clone(), rows);
        match decode(&trace, DecodeMode::Full) {
            Err(Error::Contract(_)) => {}
            other => panic!("expected contract error, got {:?}", other.map(|p| p.len())),
        }
    }

    #[test]
    fn argmax_ties_break_toward_the_lowest_index() {
        assert_eq!(argmax(&[0.5, 0.5, 0.1]), 0);
        assert_eq!(argmax(&[0.1, 0.7, 0.7]), 1);
    }

    #[test]
    fn predictions_carry_attention_maps_of_the_right_size() {
        let rows = peaked(&[1, EOS_INDEX, EOS_INDEX, EOS_INDEX]);
        let (_, trace) = trace_with_logits(Variant::Basic, rows.clone(), rows);
        let pred = decode(&trace, DecodeMode::S2).unwrap();
        assert_eq!(pred[0].attn_primary.len(), 4);
        assert_eq!(pred[0].attn_primary[0].len(), 12);
        assert_eq!(pred[0].attn_secondary.len(), 4);
        assert_eq!(pred[0].interaction.len(), 4);
        assert_eq!(pred[0].interaction[0].len(), 12);
    }
}
