//! Pixel-wise cross correlation, the cross-modal fusion transformer and the
//! sigmoid-gated modality sum.

use alloc::format;
use alloc::vec::Vec;

use crate::attention::TransformerStack;
use crate::config::ModelConfig;
use crate::conv::conv2d;
use crate::error::{shape, Result};
use crate::layers::{ConvLayer, GroupNorm};
use crate::ops::{sigmoid, silu_inplace};
use crate::params::{Init, Params};
use crate::tensor::{ConvSpec, Tensor};
use crate::tokens::{fold, unfold, TokenBlock};

/// Correlates every template cell with every search cell:
/// `out[t][s] = Σ_c template[c][t] · search[c][s]`, one output channel per
/// template cell (row-major). Implemented as a 1×1 convolution of the
/// search map with the template cells as kernels.
pub fn pw_xcorr(search: &Tensor, template: &Tensor) -> Result<Tensor> {
    let [sb, sc, _, _] = search.dims();
    let [tb, tc, th, tw] = template.dims();
    if sb != 1 || tb != 1 || sc != tc {
        return Err(shape(
            "pw_xcorr",
            format!(
                "search {:?} and template {:?} must be single maps with equal channels",
                search.dims(),
                template.dims()
            ),
        ));
    }
    let cells = th * tw;
    let z = template.data();
    let mut kernel = Vec::with_capacity(cells * tc);
    for t in 0..cells {
        kernel.extend((0..tc).map(|c| z[c * cells + t]));
    }
    let weight = Tensor::new([cells, tc, 1, 1], kernel)?;
    conv2d(search, &weight, None, &ConvSpec::pointwise(tc, cells))
}

/// Per-modality 1×1 adjust (+ group norm + SiLU) after the correlation.
#[derive(Debug, Clone)]
pub struct CorrAdjust {
    adjust: ConvLayer,
    norm: GroupNorm,
}

impl CorrAdjust {
    pub fn build(p: &mut Params, corr_channels: usize, out: usize) -> Self {
        Self {
            adjust: ConvLayer::build(
                &mut p.sub("adjust"),
                ConvSpec::pointwise(corr_channels, out),
                false,
            ),
            norm: GroupNorm::build(&mut p.sub("adjust_norm"), out),
        }
    }

    pub fn forward(&self, search: &Tensor, template: &Tensor) -> Result<Tensor> {
        let corr = pw_xcorr(search, template)?;
        let mut y = self.norm.forward(&self.adjust.forward(&corr)?)?;
        silu_inplace(&mut y);
        Ok(y)
    }
}

/// Unfolds both maps into `patch × patch` patches, joins RGB then IR tokens
/// along the sequence axis, runs the stack and splits/folds back.
#[derive(Debug, Clone)]
pub struct FusionTransformer {
    transformer: TransformerStack,
    patch: usize,
}

impl FusionTransformer {
    pub fn build(p: &mut Params, cfg: &ModelConfig) -> Self {
        Self {
            transformer: TransformerStack::build(
                &mut p.sub("transformer"),
                cfg.fusion_depth,
                cfg.fusion_dim,
                cfg.ffn_expansion,
            ),
            patch: cfg.fusion_patch,
        }
    }

    pub fn from_stack(transformer: TransformerStack, patch: usize) -> Self {
        Self { transformer, patch }
    }

    pub fn tokens(&self, rgb: &Tensor, ir: &Tensor) -> Result<TokenBlock> {
        let a = unfold(rgb, self.patch)?;
        let b = unfold(ir, self.patch)?;
        TokenBlock::concat_tokens(&[&a, &b])
    }

    pub fn forward(&self, rgb: &Tensor, ir: &Tensor) -> Result<(Tensor, Tensor)> {
        if rgb.dims() != ir.dims() {
            return Err(shape(
                "fusion_transformer",
                "modality maps differ in extent",
            ));
        }
        let joint = self.tokens(rgb, ir)?;
        let n = joint.tokens() / 2;
        let mixed = self.transformer.forward(&joint)?;
        let parts = mixed.split_tokens(&[n, n])?;
        let (h, w) = (rgb.height(), rgb.width());
        Ok((
            fold(&parts[0], h, w, self.patch)?,
            fold(&parts[1], h, w, self.patch)?,
        ))
    }
}

/// `σ(w_rgb) ⊙ rgb + σ(w_ir) ⊙ ir` with per-channel logits.
pub fn weighted_add(rgb: &Tensor, ir: &Tensor, w_rgb: &[f32], w_ir: &[f32]) -> Result<Tensor> {
    let c = rgb.channels();
    if rgb.dims() != ir.dims() || w_rgb.len() != c || w_ir.len() != c {
        return Err(shape(
            "weighted_add",
            format!(
                "maps {:?}/{:?} with gates of length {}/{}",
                rgb.dims(),
                ir.dims(),
                w_rgb.len(),
                w_ir.len()
            ),
        ));
    }
    let mut out = Tensor::zeros(rgb.dims());
    for n in 0..rgb.batch() {
        for ch in 0..c {
            let (gr, gi) = (sigmoid(w_rgb[ch]), sigmoid(w_ir[ch]));
            let (a, b) = (rgb.plane(n, ch), ir.plane(n, ch));
            for ((o, &x), &y) in out.plane_mut(n, ch).iter_mut().zip(a).zip(b) {
                *o = gr * x + gi * y;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct WeightedAdd {
    gate_rgb: Vec<f32>,
    gate_ir: Vec<f32>,
}

impl WeightedAdd {
    /// Gates start at logit 0, so both modalities enter with weight 0.5.
    pub fn build(p: &mut Params, channels: usize) -> Self {
        Self {
            gate_rgb: p
                .get("gate_rgb", [channels, 1, 1, 1], Init::Zeros)
                .into_data(),
            gate_ir: p
                .get("gate_ir", [channels, 1, 1, 1], Init::Zeros)
                .into_data(),
        }
    }

    pub fn gates(&self) -> (&[f32], &[f32]) {
        (&self.gate_rgb, &self.gate_ir)
    }

    pub fn forward(&self, rgb: &Tensor, ir: &Tensor) -> Result<Tensor> {
        weighted_add(rgb, ir, &self.gate_rgb, &self.gate_ir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use crate::params::SchemaRecorder;

    fn random(dims: [usize; 4], seed: u32) -> Tensor {
        let mut s = seed.wrapping_mul(2654435761).wrapping_add(1);
        Tensor::from_fn(dims, |_| {
            s ^= s << 13;
            s ^= s >> 17;
            s ^= s << 5;
            (s as f32 / u32::MAX as f32) * 2.0 - 1.0
        })
    }

    #[test]
    fn xcorr_basis_extracts_channel() {
        let search = random([1, 5, 4, 4], 1);
        let mut template = Tensor::zeros([1, 5, 2, 2]);
        // template cell 3 = one-hot on channel 2
        template.set(0, 2, 1, 1, 1.0);
        let out = pw_xcorr(&search, &template).unwrap();
        assert_eq!(out.dims(), [1, 4, 4, 4]);
        assert_eq!(out.plane(0, 3), search.plane(0, 2));
        assert!(out.plane(0, 0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn xcorr_zero_search_and_oracle() {
        let z = random([1, 16, 8, 8], 2);
        let zero = pw_xcorr(&Tensor::zeros([1, 16, 16, 16]), &z).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
        let x = random([1, 16, 16, 16], 3);
        let fast = pw_xcorr(&x, &z).unwrap();
        let slow = oracle::xcorr_loop(&x, &z);
        assert!(fast.max_abs_diff(&slow).unwrap() < 1e-5);
    }

    #[test]
    fn weighted_add_cases() {
        let a = random([1, 3, 4, 4], 4);
        let b = random([1, 3, 4, 4], 5);
        let half = weighted_add(&a, &b, &[0.0; 3], &[0.0; 3]).unwrap();
        let expect = a.add(&b).unwrap().scale(0.5);
        assert!(half.max_abs_diff(&expect).unwrap() < 1e-7);
        let sat = weighted_add(&a, &b, &[20.0; 3], &[-20.0; 3]).unwrap();
        assert!(sat.max_abs_diff(&a).unwrap() < 1e-6);
        let (wr, wi) = ([0.3f32, -1.2, 2.0], [1.0f32, 0.1, -0.7]);
        let out = weighted_add(&a, &b, &wr, &wi).unwrap();
        for c in 0..3 {
            for i in 0..16 {
                let e = sigmoid(wr[c]) * a.plane(0, c)[i] + sigmoid(wi[c]) * b.plane(0, c)[i];
                assert_eq!(out.plane(0, c)[i], e);
                assert!(
                    out.plane(0, c)[i].abs() <= a.plane(0, c)[i].abs() + b.plane(0, c)[i].abs()
                );
            }
        }
    }

    #[test]
    fn zero_fusion_transformer_is_identity() {
        let cfg = ModelConfig::default();
        let mut rec = SchemaRecorder::default();
        let ft = FusionTransformer::build(&mut Params::root(&mut rec), &cfg);
        let a = random([1, 128, 16, 16], 6);
        let b = random([1, 128, 16, 16], 7);
        assert_eq!(
            ft.tokens(&a, &b).unwrap().tokens(),
            2 * unfold(&a, 8).unwrap().tokens()
        );
        let (ra, rb) = ft.forward(&a, &b).unwrap();
        assert_eq!(ra, a);
        assert_eq!(rb, b);
    }
}
