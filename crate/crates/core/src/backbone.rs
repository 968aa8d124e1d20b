//! Shared RGB/thermal MobileViT backbone.
//!
//! ```text
//! stem (↓2, 3→32) → layer1 MV2 (32→64) → layer2 3×MV2 (↓2, →128)
//!   → layer3: MV2 ↓2 (→256) + intra-modal mmMobileViT
//!   → layer4: MV2 ↓2 (→384) + inter-modal mmMobileViT
//! ```
//!
//! All four streams (search/template × RGB/thermal) share every weight up to
//! and including Layer_3. Layer_3 attends over the template‖search token
//! sequence of one modality at a time; Layer_4 is the first place where the
//! two modalities meet.

use alloc::format;
use alloc::vec::Vec;

use crate::attention::TransformerStack;
use crate::config::{Layer4Concat, ModelConfig, Variant};
use crate::error::{shape, Error, Result};
use crate::layers::{ConvLayer, GroupNorm};
use crate::ops::silu_inplace;
use crate::params::Params;
use crate::tensor::{ConvSpec, Tensor};
use crate::tokens::{fold, unfold, TokenBlock};

/// Search and template maps of one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamPair {
    pub search: Tensor,
    pub template: Tensor,
}

/// Per-modality maps; `ir` is absent for the RGB-only variant.
#[derive(Debug, Clone, PartialEq)]
pub struct Modalities {
    pub rgb: StreamPair,
    pub ir: Option<StreamPair>,
}

impl Modalities {
    fn pairs(&self) -> Vec<&StreamPair> {
        core::iter::once(&self.rgb)
            .chain(self.ir.as_ref())
            .collect()
    }

    fn from_pairs(mut pairs: Vec<StreamPair>) -> Self {
        let ir = if pairs.len() > 1 { pairs.pop() } else { None };
        Self {
            rgb: pairs.pop().expect("at least one modality"),
            ir,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Stem {
    dw: ConvLayer,
    dw_norm: GroupNorm,
    pw: ConvLayer,
    pw_norm: GroupNorm,
}

impl Stem {
    pub fn build(p: &mut Params, cin: usize, cout: usize) -> Self {
        Self {
            dw: ConvLayer::build(&mut p.sub("dw"), ConvSpec::depthwise(cin, 3, 2), false),
            dw_norm: GroupNorm::build(&mut p.sub("dw_norm"), cin),
            pw: ConvLayer::build(&mut p.sub("pw"), ConvSpec::pointwise(cin, cout), false),
            pw_norm: GroupNorm::build(&mut p.sub("pw_norm"), cout),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let h = self.dw_norm.forward(&self.dw.forward(x)?)?;
        let mut y = self.pw_norm.forward(&self.pw.forward(&h)?)?;
        silu_inplace(&mut y);
        Ok(y)
    }
}

/// Inverted residual: expand 1×1 → depth-wise 3×3 (stride) → project 1×1,
/// with an identity skip when stride is 1 and the width is unchanged.
#[derive(Debug, Clone)]
pub struct Mv2Block {
    expand: ConvLayer,
    expand_norm: GroupNorm,
    dw: ConvLayer,
    dw_norm: GroupNorm,
    project: ConvLayer,
    project_norm: GroupNorm,
    residual: bool,
}

impl Mv2Block {
    pub fn build(p: &mut Params, cin: usize, cout: usize, stride: usize, expansion: usize) -> Self {
        let hidden = cin * expansion;
        Self {
            expand: ConvLayer::build(
                &mut p.sub("expand"),
                ConvSpec::pointwise(cin, hidden),
                false,
            ),
            expand_norm: GroupNorm::build(&mut p.sub("expand_norm"), hidden),
            dw: ConvLayer::build(
                &mut p.sub("dw"),
                ConvSpec::depthwise(hidden, 3, stride),
                false,
            ),
            dw_norm: GroupNorm::build(&mut p.sub("dw_norm"), hidden),
            project: ConvLayer::build(
                &mut p.sub("project"),
                ConvSpec::pointwise(hidden, cout),
                false,
            ),
            project_norm: GroupNorm::build(&mut p.sub("project_norm"), cout),
            residual: stride == 1 && cin == cout,
        }
    }

    pub fn has_residual(&self) -> bool {
        self.residual
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = self.expand_norm.forward(&self.expand.forward(x)?)?;
        silu_inplace(&mut h);
        let mut h = self.dw_norm.forward(&self.dw.forward(&h)?)?;
        silu_inplace(&mut h);
        let mut y = self.project_norm.forward(&self.project.forward(&h)?)?;
        if self.residual {
            y.add_assign(x)?;
        }
        Ok(y)
    }
}

/// Local representation ahead of tokenisation: depth-wise 3×3 + norm + SiLU,
/// then a 1×1 projection to the attention width.
#[derive(Debug, Clone)]
pub struct LocalRep {
    dw: ConvLayer,
    dw_norm: GroupNorm,
    pw: ConvLayer,
}

impl LocalRep {
    pub fn build(p: &mut Params, channels: usize, dim: usize) -> Self {
        Self {
            dw: ConvLayer::build(&mut p.sub("dw"), ConvSpec::depthwise(channels, 3, 1), false),
            dw_norm: GroupNorm::build(&mut p.sub("dw_norm"), channels),
            pw: ConvLayer::build(&mut p.sub("pw"), ConvSpec::pointwise(channels, dim), false),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = self.dw_norm.forward(&self.dw.forward(x)?)?;
        silu_inplace(&mut h);
        self.pw.forward(&h)
    }
}

/// 1×1 projection back to the stage width, followed by group norm.
#[derive(Debug, Clone)]
pub struct Projection {
    conv: ConvLayer,
    norm: GroupNorm,
}

impl Projection {
    pub fn build(p: &mut Params, dim: usize, channels: usize) -> Self {
        Self {
            conv: ConvLayer::build(
                &mut p.sub("proj"),
                ConvSpec::pointwise(dim, channels),
                false,
            ),
            norm: GroupNorm::build(&mut p.sub("proj_norm"), channels),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.norm.forward(&self.conv.forward(x)?)
    }
}

/// Tokens of one modality: template tokens first, then search tokens.
pub(crate) fn joint_tokens(
    search: &Tensor,
    template: &Tensor,
    patch: usize,
) -> Result<(TokenBlock, [usize; 2])> {
    let z = unfold(template, patch)?;
    let x = unfold(search, patch)?;
    let counts = [z.tokens(), x.tokens()];
    Ok((TokenBlock::concat_tokens(&[&z, &x])?, counts))
}

/// Splits a joint template‖search block and folds both parts back to maps.
pub(crate) fn split_fold(
    tokens: &TokenBlock,
    counts: [usize; 2],
    search_hw: (usize, usize),
    template_hw: (usize, usize),
    patch: usize,
) -> Result<StreamPair> {
    let parts = tokens.split_tokens(&counts)?;
    Ok(StreamPair {
        template: fold(&parts[0], template_hw.0, template_hw.1, patch)?,
        search: fold(&parts[1], search_hw.0, search_hw.1, patch)?,
    })
}

fn hw(t: &Tensor) -> (usize, usize) {
    (t.height(), t.width())
}

/// Layer_3: intra-modal mmMobileViT. Every weight is shared by both modalities.
#[derive(Debug, Clone)]
pub struct IntraModalLayer {
    local: LocalRep,
    transformer: TransformerStack,
    proj: Projection,
    patch: usize,
}

impl IntraModalLayer {
    pub fn build(p: &mut Params, channels: usize, cfg: &ModelConfig) -> Self {
        Self {
            local: LocalRep::build(&mut p.sub("local"), channels, cfg.layer3_dim),
            transformer: TransformerStack::build(
                &mut p.sub("transformer"),
                cfg.layer3_depth,
                cfg.layer3_dim,
                cfg.ffn_expansion,
            ),
            proj: Projection::build(p, cfg.layer3_dim, channels),
            patch: cfg.backbone_patch,
        }
    }

    /// Runs one modality. Called independently per modality, so nothing
    /// from one modality can reach the other.
    pub fn forward(&self, pair: &StreamPair) -> Result<StreamPair> {
        let ls = self.local.forward(&pair.search)?;
        let lz = self.local.forward(&pair.template)?;
        let (tokens, counts) = joint_tokens(&ls, &lz, self.patch)?;
        let mixed = self.transformer.forward(&tokens)?;
        let folded = split_fold(&mixed, counts, hw(&ls), hw(&lz), self.patch)?;
        Ok(StreamPair {
            search: self.proj.forward(&folded.search)?,
            template: self.proj.forward(&folded.template)?,
        })
    }
}

/// Layer_4: inter-modal mmMobileViT. Local and output projections are
/// per-modality; the transformer stack is joint.
#[derive(Debug, Clone)]
pub struct InterModalLayer {
    local: Vec<LocalRep>,
    transformer: TransformerStack,
    proj: Vec<Projection>,
    patch: usize,
    concat: Layer4Concat,
    modality_dim: usize,
}

pub const MODALITY_NAMES: [&str; 2] = ["rgb", "ir"];

impl InterModalLayer {
    pub fn build(p: &mut Params, channels: usize, cfg: &ModelConfig) -> Self {
        let modalities = if cfg.variant.uses_thermal() { 2 } else { 1 };
        let dim = cfg.layer4_modality_dim();
        let mut local = Vec::new();
        let mut proj = Vec::new();
        for name in &MODALITY_NAMES[..modalities] {
            let mut m = p.sub(name);
            local.push(LocalRep::build(&mut m.sub("local"), channels, dim));
            proj.push(Projection::build(&mut m, dim, channels));
        }
        Self {
            local,
            transformer: TransformerStack::build(
                &mut p.sub("transformer"),
                cfg.layer4_depth,
                cfg.layer4_dim,
                cfg.ffn_expansion,
            ),
            proj,
            patch: cfg.backbone_patch,
            concat: cfg.layer4_concat,
            modality_dim: dim,
        }
    }

    pub fn modalities(&self) -> usize {
        self.local.len()
    }

    /// Joins per-modality blocks the way the transformer sees them.
    pub fn join(&self, blocks: &[TokenBlock]) -> Result<TokenBlock> {
        let refs: Vec<&TokenBlock> = blocks.iter().collect();
        match (refs.len(), self.concat) {
            (1, _) => Ok(blocks[0].clone()),
            (_, Layer4Concat::Embedding) => TokenBlock::concat_dim(&refs),
            (_, Layer4Concat::Sequence) => TokenBlock::concat_tokens(&refs),
        }
    }

    fn split(&self, joint: &TokenBlock, n: usize, tokens: usize) -> Result<Vec<TokenBlock>> {
        match (n, self.concat) {
            (1, _) => Ok(alloc::vec![joint.clone()]),
            (_, Layer4Concat::Embedding) => joint.split_dim(&alloc::vec![self.modality_dim; n]),
            (_, Layer4Concat::Sequence) => joint.split_tokens(&alloc::vec![tokens; n]),
        }
    }

    pub fn forward(&self, pairs: &[&StreamPair]) -> Result<Vec<StreamPair>> {
        if pairs.len() != self.local.len() {
            return Err(Error::Input(format!(
                "Layer_4 built for {} modalities, got {}",
                self.local.len(),
                pairs.len()
            )));
        }
        let mut blocks = Vec::new();
        let mut layout = None;
        for (local, pair) in self.local.iter().zip(pairs) {
            let ls = local.forward(&pair.search)?;
            let lz = local.forward(&pair.template)?;
            let (tokens, counts) = joint_tokens(&ls, &lz, self.patch)?;
            layout = Some((counts, hw(&ls), hw(&lz)));
            blocks.push(tokens);
        }
        let (counts, shw, zhw) = layout.expect("non-empty");
        let joint = self.join(&blocks)?;
        let mixed = self.transformer.forward(&joint)?;
        let parts = self.split(&mixed, blocks.len(), counts[0] + counts[1])?;
        parts
            .iter()
            .zip(&self.proj)
            .map(|(part, proj)| {
                let f = split_fold(part, counts, shw, zhw, self.patch)?;
                Ok(StreamPair {
                    search: proj.forward(&f.search)?,
                    template: proj.forward(&f.template)?,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Backbone {
    stem: Stem,
    layer1: Vec<Mv2Block>,
    layer2: Vec<Mv2Block>,
    layer3_down: Mv2Block,
    layer3: IntraModalLayer,
    layer4_down: Mv2Block,
    layer4: InterModalLayer,
    search_size: usize,
    template_size: usize,
    variant: Variant,
}

/// Stage outputs recorded by [`Backbone::forward_traced`].
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneTrace {
    /// Layer_3 input (after the shared early stages).
    pub early: Modalities,
    pub layer3: Modalities,
    /// Layer_4 input.
    pub layer4_in: Modalities,
    pub layer4: Modalities,
}

impl Backbone {
    pub fn build(p: &mut Params, cfg: &ModelConfig) -> Self {
        let c = cfg.channels;
        let e = cfg.mv2_expansion;
        let layer2 = (0..cfg.layer2_blocks)
            .map(|i| {
                let (cin, stride) = if i == 0 { (c[2], 2) } else { (c[3], 1) };
                Mv2Block::build(&mut p.sub("layer2").sub(i), cin, c[3], stride, e)
            })
            .collect();
        Self {
            stem: Stem::build(&mut p.sub("stem"), c[0], c[1]),
            layer1: alloc::vec![Mv2Block::build(
                &mut p.sub("layer1").sub(0),
                c[1],
                c[2],
                1,
                e
            )],
            layer2,
            layer3_down: Mv2Block::build(&mut p.sub("layer3").sub("down"), c[3], c[4], 2, e),
            layer3: IntraModalLayer::build(&mut p.sub("layer3"), c[4], cfg),
            layer4_down: Mv2Block::build(&mut p.sub("layer4").sub("down"), c[4], c[5], 2, e),
            layer4: InterModalLayer::build(&mut p.sub("layer4"), c[5], cfg),
            search_size: cfg.search_size,
            template_size: cfg.template_size,
            variant: cfg.variant,
        }
    }

    pub fn stem(&self) -> &Stem {
        &self.stem
    }

    pub fn layer3(&self) -> &IntraModalLayer {
        &self.layer3
    }

    pub fn layer4(&self) -> &InterModalLayer {
        &self.layer4
    }

    fn check_image(&self, x: &Tensor, size: usize, what: &str) -> Result<()> {
        if x.dims() != [1, 3, size, size] {
            return Err(shape(
                "backbone",
                format!("{what} must be [1, 3, {size}, {size}], got {:?}", x.dims()),
            ));
        }
        Ok(())
    }

    /// Shared per-stream stages up to the Layer_3 input. Template outputs of
    /// this function can be cached for a whole sequence.
    pub fn early(&self, x: &Tensor) -> Result<Tensor> {
        x.ensure_finite("backbone input")?;
        let mut h = self.stem.forward(x)?;
        for b in self.layer1.iter().chain(&self.layer2) {
            h = b.forward(&h)?;
        }
        self.layer3_down.forward(&h)
    }

    pub fn early_search(&self, x: &Tensor) -> Result<Tensor> {
        self.check_image(x, self.search_size, "search image")?;
        self.early(x)
    }

    pub fn early_template(&self, z: &Tensor) -> Result<Tensor> {
        self.check_image(z, self.template_size, "template image")?;
        self.early(z)
    }

    fn check_modalities(&self, m: &Modalities) -> Result<()> {
        if m.ir.is_some() != self.variant.uses_thermal() {
            return Err(Error::Input(format!(
                "variant {} {} thermal inputs",
                self.variant,
                if self.variant.uses_thermal() {
                    "requires"
                } else {
                    "does not take"
                }
            )));
        }
        Ok(())
    }

    /// Runs Layer_3 and Layer_4 on early features.
    pub fn forward_from_early(&self, early: &Modalities) -> Result<Modalities> {
        Ok(self.forward_traced_from_early(early.clone())?.layer4)
    }

    pub fn forward_traced_from_early(&self, early: Modalities) -> Result<BackboneTrace> {
        self.check_modalities(&early)?;
        let layer3 = Modalities::from_pairs(
            early
                .pairs()
                .into_iter()
                .map(|p| self.layer3.forward(p))
                .collect::<Result<_>>()?,
        );
        let layer4_in = Modalities::from_pairs(
            layer3
                .pairs()
                .into_iter()
                .map(|p| {
                    Ok(StreamPair {
                        search: self.layer4_down.forward(&p.search)?,
                        template: self.layer4_down.forward(&p.template)?,
                    })
                })
                .collect::<Result<_>>()?,
        );
        let layer4 = Modalities::from_pairs(self.layer4.forward(&layer4_in.pairs())?);
        Ok(BackboneTrace {
            early,
            layer3,
            layer4_in,
            layer4,
        })
    }

    /// Full backbone on raw images (search `[1,3,S,S]`, template `[1,3,S/2,S/2]`).
    pub fn forward(&self, images: &Modalities) -> Result<Modalities> {
        Ok(self.forward_traced(images)?.layer4)
    }

    pub fn forward_traced(&self, images: &Modalities) -> Result<BackboneTrace> {
        self.check_modalities(images)?;
        let early = Modalities::from_pairs(
            images
                .pairs()
                .into_iter()
                .map(|p| {
                    Ok(StreamPair {
                        search: self.early_search(&p.search)?,
                        template: self.early_template(&p.template)?,
                    })
                })
                .collect::<Result<_>>()?,
        );
        self.forward_traced_from_early(early)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::conv2d;
    use crate::ops::{group_norm, silu};
    use crate::oracle::joint_tokens_loop;
    use crate::params::{Init, ParamSource};
    use crate::weights::RandomSource;
    use alloc::collections::BTreeMap;
    use alloc::string::{String, ToString};

    fn small(concat: Layer4Concat) -> ModelConfig {
        ModelConfig {
            template_size: 32,
            search_size: 64,
            channels: [3, 8, 12, 16, 24, 32],
            layer3_dim: 12,
            layer4_dim: 16,
            layer3_depth: 2,
            layer4_depth: 2,
            layer4_concat: concat,
            ..ModelConfig::default()
        }
    }

    fn map(dims: [usize; 4], seed: u32) -> Tensor {
        Tensor::from_fn(dims, |[_, c, y, x]| {
            let h = (c as u32 * 73 + y as u32 * 151 + x as u32 * 37 + seed * 101) % 997;
            h as f32 / 997.0
        })
    }

    /// Random weights, except names accepted by `zero` which come back as zeros.
    struct Masked<F> {
        inner: RandomSource,
        zero: F,
    }

    impl<F: Fn(&str) -> bool> ParamSource for Masked<F> {
        fn param(&mut self, name: &str, dims: [usize; 4], init: Init) -> Tensor {
            let t = self.inner.fill(dims, init);
            if (self.zero)(name) {
                Tensor::zeros(dims)
            } else {
                t
            }
        }
    }

    #[test]
    fn mv2_zero_projection_is_pure_residual() {
        let mut src = Masked {
            inner: RandomSource::new(1),
            zero: |n: &str| n == "project.weight",
        };
        let block = Mv2Block::build(&mut Params::root(&mut src), 8, 8, 1, 2);
        assert!(block.has_residual());
        let x = map([1, 8, 16, 16], 3);
        assert_eq!(block.forward(&x).unwrap(), x);
    }

    #[test]
    fn mv2_stride_two_halves_extents() {
        let block = Mv2Block::build(&mut Params::root(&mut RandomSource::new(2)), 8, 12, 2, 2);
        assert!(!block.has_residual());
        let y = block.forward(&map([1, 8, 16, 16], 1)).unwrap();
        assert_eq!(y.dims(), [1, 12, 8, 8]);
        let odd = block.forward(&map([1, 8, 15, 15], 1)).unwrap();
        assert_eq!(odd.dims(), [1, 12, 8, 8]);
    }

    #[test]
    fn mv2_equals_composed_kernels() {
        let block = Mv2Block::build(&mut Params::root(&mut RandomSource::new(3)), 8, 8, 1, 2);
        let x = map([1, 8, 12, 12], 5);
        let gn = |t: &Tensor| {
            let c = t.channels();
            group_norm(t, 1, &alloc::vec![1.0; c], &alloc::vec![0.0; c]).unwrap()
        };
        let h = gn(&conv2d(&x, block.expand.weight(), None, &ConvSpec::pointwise(8, 16)).unwrap())
            .map(silu);
        let h = gn(&conv2d(&h, block.dw.weight(), None, &ConvSpec::depthwise(16, 3, 1)).unwrap())
            .map(silu);
        let y = gn(&conv2d(
            &h,
            block.project.weight(),
            None,
            &ConvSpec::pointwise(16, 8),
        )
        .unwrap())
        .add(&x)
        .unwrap();
        assert_eq!(block.forward(&x).unwrap(), y);
    }

    #[test]
    fn layer3_matches_index_oracle() {
        let cfg = small(Layer4Concat::Embedding);
        let layer = IntraModalLayer::build(&mut Params::root(&mut RandomSource::new(4)), 24, &cfg);
        let pair = StreamPair {
            search: map([1, 24, 8, 8], 1),
            template: map([1, 24, 4, 4], 2),
        };
        let got = layer.forward(&pair).unwrap();
        let ls = layer.local.forward(&pair.search).unwrap();
        let lz = layer.local.forward(&pair.template).unwrap();
        let (s, z) = joint_tokens_loop(&[(&ls, &lz)], 2, true, |b| {
            // template and search share one sequence: 4 + 16 tokens per group
            assert_eq!((b.groups(), b.tokens(), b.dim()), (4, 20, 12));
            layer.transformer.forward(b)
        })
        .unwrap()
        .remove(0);
        assert!(
            got.search
                .max_abs_diff(&layer.proj.forward(&s).unwrap())
                .unwrap()
                <= 1e-5
        );
        assert!(
            got.template
                .max_abs_diff(&layer.proj.forward(&z).unwrap())
                .unwrap()
                <= 1e-5
        );
    }

    #[test]
    fn layer4_matches_index_oracle_for_both_concat_axes() {
        for (concat, embedding) in [
            (Layer4Concat::Embedding, true),
            (Layer4Concat::Sequence, false),
        ] {
            let cfg = small(concat);
            let layer =
                InterModalLayer::build(&mut Params::root(&mut RandomSource::new(5)), 32, &cfg);
            let rgb = StreamPair {
                search: map([1, 32, 4, 4], 1),
                template: map([1, 32, 2, 2], 2),
            };
            let ir = StreamPair {
                search: map([1, 32, 4, 4], 3),
                template: map([1, 32, 2, 2], 4),
            };
            let got = layer.forward(&[&rgb, &ir]).unwrap();
            let local: Vec<(Tensor, Tensor)> = [&rgb, &ir]
                .iter()
                .zip(&layer.local)
                .map(|(p, l)| {
                    (
                        l.forward(&p.search).unwrap(),
                        l.forward(&p.template).unwrap(),
                    )
                })
                .collect();
            let refs: Vec<(&Tensor, &Tensor)> = local.iter().map(|(s, z)| (s, z)).collect();
            let want = joint_tokens_loop(&refs, 2, embedding, |b| {
                let expect = if embedding { (5, 16) } else { (10, 16) };
                assert_eq!((b.tokens(), b.dim()), expect);
                layer.transformer.forward(b)
            })
            .unwrap();
            for ((g, (s, z)), proj) in got.iter().zip(&want).zip(&layer.proj) {
                assert!(g.search.max_abs_diff(&proj.forward(s).unwrap()).unwrap() <= 1e-5);
                assert!(g.template.max_abs_diff(&proj.forward(z).unwrap()).unwrap() <= 1e-5);
            }
        }
    }

    fn images(seed: u32) -> StreamPair {
        StreamPair {
            search: map([1, 3, 64, 64], seed),
            template: map([1, 3, 32, 32], seed + 1),
        }
    }

    #[test]
    fn layer3_isolates_modalities_and_layer4_couples_them() {
        let cfg = small(Layer4Concat::Embedding);
        let bb = Backbone::build(&mut Params::root(&mut RandomSource::new(6)), &cfg);
        let run = |ir: StreamPair| {
            bb.forward_traced(&Modalities {
                rgb: images(1),
                ir: Some(ir),
            })
            .unwrap()
        };
        let a = run(images(10));
        let mut perturbed = images(10);
        perturbed.search.data_mut()[100] += 0.5;
        perturbed.template.data_mut()[7] -= 0.25;
        let b = run(perturbed);
        assert_eq!(a.early.rgb, b.early.rgb);
        assert_eq!(a.layer3.rgb, b.layer3.rgb);
        assert_eq!(a.layer4_in.rgb, b.layer4_in.rgb);
        assert_ne!(a.layer3.ir, b.layer3.ir);
        assert!(
            a.layer4
                .rgb
                .search
                .max_abs_diff(&b.layer4.rgb.search)
                .unwrap()
                > 0.0
        );
    }

    /// Makes Layer_4 invariant under exchanging the modalities: the thermal
    /// local/projection weights copy the RGB ones and every transformer
    /// tensor commutes with swapping the two embedding halves.
    struct Symmetric {
        inner: RandomSource,
        seen: BTreeMap<String, Tensor>,
        half: usize,
    }

    impl Symmetric {
        /// Rows `[row_half, 2·row_half)` of `rows_range` become the first
        /// half with columns rotated by `col_half`.
        fn mirror(t: &mut Tensor, rows: core::ops::Range<usize>, row_half: usize, col_half: usize) {
            let cols = t.channels();
            let src = t.clone();
            for r in rows.start + row_half..rows.end {
                for c in 0..cols {
                    let v = src.at(r - row_half, (c + col_half) % cols, 0, 0);
                    t.set(r, c, 0, 0, v);
                }
            }
        }
    }

    impl ParamSource for Symmetric {
        fn param(&mut self, name: &str, dims: [usize; 4], init: Init) -> Tensor {
            let mut t = self.inner.fill(dims, init);
            if let Some(rest) = name.strip_prefix("ir.") {
                t = self.seen[&format!("rgb.{rest}")].clone();
            }
            let h = self.half;
            let d = 2 * h;
            let matrix = dims[1] > 1;
            let (row_half, col_half) = match name.rsplit('.').nth(1) {
                Some("fc1") => (d, if matrix { h } else { 0 }),
                Some("fc2") => (h, if matrix { d } else { 0 }),
                _ => (h, if matrix { h } else { 0 }),
            };
            if name.contains("transformer.") {
                if name.contains("attn.qkv") {
                    // query row: columns symmetric; then key and value blocks
                    if matrix {
                        for c in h..d {
                            let v = t.at(0, c - h, 0, 0);
                            t.set(0, c, 0, 0, v);
                        }
                    }
                    Self::mirror(&mut t, 1..1 + d, h, col_half);
                    Self::mirror(&mut t, 1 + d..1 + 2 * d, h, col_half);
                } else {
                    Self::mirror(&mut t, 0..dims[0], row_half, col_half);
                }
            }
            self.seen.insert(name.to_string(), t.clone());
            t
        }
    }

    #[test]
    fn layer4_relabelling_symmetry() {
        let cfg = small(Layer4Concat::Embedding);
        let mut src = Symmetric {
            inner: RandomSource::new(7),
            seen: BTreeMap::new(),
            half: 8,
        };
        let layer = InterModalLayer::build(&mut Params::root(&mut src), 32, &cfg);
        let a = StreamPair {
            search: map([1, 32, 4, 4], 1),
            template: map([1, 32, 2, 2], 2),
        };
        let b = StreamPair {
            search: map([1, 32, 4, 4], 3),
            template: map([1, 32, 2, 2], 4),
        };
        let same = layer.forward(&[&a, &a]).unwrap();
        assert_eq!(same[0], same[1]);
        let ab = layer.forward(&[&a, &b]).unwrap();
        let ba = layer.forward(&[&b, &a]).unwrap();
        assert_ne!(ab[0], ab[1]);
        for (x, y) in [(&ab[0], &ba[1]), (&ab[1], &ba[0])] {
            assert!(x.search.max_abs_diff(&y.search).unwrap() <= 1e-5);
            assert!(x.template.max_abs_diff(&y.template).unwrap() <= 1e-5);
        }
    }

    #[test]
    fn wrong_inputs_are_rejected() {
        let cfg = small(Layer4Concat::Embedding);
        let bb = Backbone::build(&mut Params::root(&mut RandomSource::new(8)), &cfg);
        assert!(bb.early_search(&map([1, 3, 32, 32], 0)).is_err());
        assert!(bb
            .forward(&Modalities {
                rgb: images(1),
                ir: None
            })
            .is_err());
        let layer4 = InterModalLayer::build(&mut Params::root(&mut RandomSource::new(8)), 32, &cfg);
        let p = StreamPair {
            search: map([1, 32, 4, 4], 1),
            template: map([1, 32, 2, 2], 2),
        };
        assert!(layer4.forward(&[&p]).is_err());
    }
}
