//! Separable (linear-cost) attention and the transformer layer built on it.
//!
//! For a group of `k` tokens of width `d`, one `1×1` projection yields a
//! scalar query score per token plus key and value rows. The scores are
//! softmax-normalised over the tokens, the keys are pooled with those
//! weights into a single `d`-wide context vector, and every output token is
//! `context ⊙ relu(value)`. No `k × k` matrix is ever formed.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape, Error, Result};
use crate::ops;
use crate::params::{Init, Params};
use crate::tensor::Tensor;
use crate::tokens::TokenBlock;

/// `1×1` projection over the token embedding axis.
#[derive(Debug, Clone)]
pub struct Linear {
    weight: Vec<f32>,
    bias: Option<Vec<f32>>,
    in_dim: usize,
    out_dim: usize,
}

impl Linear {
    pub fn build(p: &mut Params, in_dim: usize, out_dim: usize, bias: bool) -> Self {
        let w = p.get("weight", [out_dim, in_dim, 1, 1], Init::FanIn(in_dim));
        let b = bias.then(|| p.get("bias", [out_dim, 1, 1, 1], Init::FanIn(in_dim)));
        Self::from_tensors(&w, b.as_ref()).expect("dims fixed by build")
    }

    /// `weight` is `[out, in, 1, 1]`, `bias` is `[out, 1, 1, 1]`.
    pub fn from_tensors(weight: &Tensor, bias: Option<&Tensor>) -> Result<Self> {
        let [out_dim, in_dim, kh, kw] = weight.dims();
        if (kh, kw) != (1, 1) {
            return Err(shape("linear", "weight must be [out, in, 1, 1]"));
        }
        if bias.is_some_and(|b| b.len() != out_dim) {
            return Err(shape("linear", "bias length must equal out dim"));
        }
        Ok(Self {
            weight: weight.data().to_vec(),
            bias: bias.map(|b| b.data().to_vec()),
            in_dim,
            out_dim,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn forward(&self, x: &TokenBlock) -> Result<TokenBlock> {
        if x.dim() != self.in_dim {
            return Err(shape(
                "linear",
                alloc::format!("token dim {} != input dim {}", x.dim(), self.in_dim),
            ));
        }
        x.linear(&self.weight, self.bias.as_deref(), self.out_dim)
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    gamma: Vec<f32>,
    beta: Vec<f32>,
}

impl LayerNorm {
    pub fn build(p: &mut Params, dim: usize) -> Self {
        Self {
            gamma: p.get("weight", [dim, 1, 1, 1], Init::Ones).into_data(),
            beta: p.get("bias", [dim, 1, 1, 1], Init::Zeros).into_data(),
        }
    }

    pub fn forward(&self, x: &TokenBlock) -> Result<TokenBlock> {
        x.layer_norm(&self.gamma, &self.beta)
    }
}

/// The Eq.-2 core on already projected tokens. `qkv` has width `1 + 2d`:
/// column 0 is the query score, then `d` key columns, then `d` value columns.
pub fn separable_mix(qkv: &TokenBlock) -> Result<TokenBlock> {
    let w = qkv.dim();
    if w < 3 || !(w - 1).is_multiple_of(2) {
        return Err(shape(
            "separable_attention",
            alloc::format!("projected width {w} is not 1 + 2d"),
        ));
    }
    if !qkv.all_finite() {
        return Err(Error::NonFinite("separable_attention"));
    }
    let d = (w - 1) / 2;
    let (groups, k) = (qkv.groups(), qkv.tokens());
    let mut out = vec![0f32; groups * k * d];
    let mut context = vec![0f64; d];
    let mut scores = vec![0f32; k];
    for g in 0..groups {
        let slab = qkv.group(g);
        for (t, s) in scores.iter_mut().enumerate() {
            *s = slab[t * w];
        }
        let weights = ops::softmax(&scores);
        context.iter_mut().for_each(|c| *c = 0.0);
        for (t, &p) in weights.iter().enumerate() {
            let key = &slab[t * w + 1..t * w + 1 + d];
            for (c, &kv) in context.iter_mut().zip(key) {
                *c += p * kv as f64;
            }
        }
        let dst = &mut out[g * k * d..(g + 1) * k * d];
        for t in 0..k {
            let value = &slab[t * w + 1 + d..(t + 1) * w];
            for ((o, &v), &c) in dst[t * d..(t + 1) * d].iter_mut().zip(value).zip(&context) {
                *o = (c * ops::relu(v) as f64) as f32;
            }
        }
    }
    TokenBlock::new(groups, k, d, out)
}

#[derive(Debug, Clone)]
pub struct SeparableAttention {
    qkv: Linear,
    out: Linear,
}

impl SeparableAttention {
    pub fn build(p: &mut Params, dim: usize) -> Self {
        Self {
            qkv: Linear::build(&mut p.sub("qkv"), dim, 1 + 2 * dim, true),
            out: Linear::build(&mut p.sub("out"), dim, dim, true),
        }
    }

    pub fn from_parts(qkv: Linear, out: Linear) -> Result<Self> {
        let d = out.in_dim();
        if qkv.out_dim() != 1 + 2 * d || qkv.in_dim() != out.out_dim() {
            return Err(shape(
                "separable_attention",
                "inconsistent projection widths",
            ));
        }
        Ok(Self { qkv, out })
    }

    pub fn dim(&self) -> usize {
        self.out.out_dim()
    }

    pub fn forward(&self, x: &TokenBlock) -> Result<TokenBlock> {
        if !x.all_finite() {
            return Err(Error::NonFinite("separable_attention input"));
        }
        let mixed = separable_mix(&self.qkv.forward(x)?)?;
        self.out.forward(&mixed)
    }
}

#[derive(Debug, Clone)]
pub struct FeedForward {
    fc1: Linear,
    fc2: Linear,
}

impl FeedForward {
    pub fn build(p: &mut Params, dim: usize, expansion: usize) -> Self {
        Self {
            fc1: Linear::build(&mut p.sub("fc1"), dim, dim * expansion, true),
            fc2: Linear::build(&mut p.sub("fc2"), dim * expansion, dim, true),
        }
    }

    pub fn forward(&self, x: &TokenBlock) -> Result<TokenBlock> {
        let h = self.fc1.forward(x)?.map(ops::silu);
        self.fc2.forward(&h)
    }
}

/// Pre-norm layer: `x + attn(norm1(x))`, then `x + ffn(norm2(x))`.
#[derive(Debug, Clone)]
pub struct TransformerLayer {
    norm1: LayerNorm,
    attn: SeparableAttention,
    norm2: LayerNorm,
    ffn: FeedForward,
}

impl TransformerLayer {
    pub fn build(p: &mut Params, dim: usize, ffn_expansion: usize) -> Self {
        Self {
            norm1: LayerNorm::build(&mut p.sub("norm1"), dim),
            attn: SeparableAttention::build(&mut p.sub("attn"), dim),
            norm2: LayerNorm::build(&mut p.sub("norm2"), dim),
            ffn: FeedForward::build(&mut p.sub("ffn"), dim, ffn_expansion),
        }
    }

    pub fn forward(&self, x: &TokenBlock) -> Result<TokenBlock> {
        let mut y = x.clone();
        y.add_assign(&self.attn.forward(&self.norm1.forward(x)?)?)?;
        let f = self.ffn.forward(&self.norm2.forward(&y)?)?;
        y.add_assign(&f)?;
        Ok(y)
    }
}

/// `depth` transformer layers named `0..depth` under the given prefix.
#[derive(Debug, Clone)]
pub struct TransformerStack {
    layers: Vec<TransformerLayer>,
}

impl TransformerStack {
    pub fn build(p: &mut Params, depth: usize, dim: usize, ffn_expansion: usize) -> Self {
        Self {
            layers: (0..depth)
                .map(|i| TransformerLayer::build(&mut p.sub(i), dim, ffn_expansion))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[TransformerLayer] {
        &self.layers
    }

    pub fn forward(&self, x: &TokenBlock) -> Result<TokenBlock> {
        let mut y = x.clone();
        for layer in &self.layers {
            y = layer.forward(&y)?;
        }
        Ok(y)
    }
}

/// Dot product with eight independent partial sums, so it vectorises.
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut lanes = [0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f32 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            lanes[l] += x[l] * y[l];
        }
    }
    lanes.iter().sum::<f32>() + tail
}

/// Standard single-head softmax attention, the quadratic-cost baseline for
/// the cost benchmark. Scores are streamed one query row at a time.
#[derive(Debug, Clone)]
pub struct SoftmaxAttention {
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
}

impl SoftmaxAttention {
    pub fn build(p: &mut Params, dim: usize) -> Self {
        Self {
            q: Linear::build(&mut p.sub("q"), dim, dim, true),
            k: Linear::build(&mut p.sub("k"), dim, dim, true),
            v: Linear::build(&mut p.sub("v"), dim, dim, true),
            out: Linear::build(&mut p.sub("out"), dim, dim, true),
        }
    }

    pub fn from_parts(q: Linear, k: Linear, v: Linear, out: Linear) -> Result<Self> {
        let d = q.in_dim();
        if [&q, &k, &v, &out]
            .iter()
            .any(|l| l.in_dim() != d || l.out_dim() != d)
        {
            return Err(shape("softmax_attention", "every projection must be d → d"));
        }
        Ok(Self { q, k, v, out })
    }

    pub fn forward(&self, x: &TokenBlock) -> Result<TokenBlock> {
        if !x.all_finite() {
            return Err(Error::NonFinite("softmax_attention input"));
        }
        let q = self.q.forward(x)?;
        let k = self.k.forward(x)?;
        let v = self.v.forward(x)?;
        let (groups, n, d) = (x.groups(), x.tokens(), q.dim());
        let scale = 1.0 / libm::sqrtf(d as f32);
        let mut mixed = vec![0f32; groups * n * d];
        let mut row = vec![0f32; n];
        for g in 0..groups {
            let (qg, kg, vg) = (q.group(g), k.group(g), v.group(g));
            for i in 0..n {
                let qi = &qg[i * d..(i + 1) * d];
                let mut max = f32::NEG_INFINITY;
                for (r, kj) in row.iter_mut().zip(kg.chunks_exact(d)) {
                    *r = dot(qi, kj) * scale;
                    max = max.max(*r);
                }
                for r in row.iter_mut() {
                    *r = ops::exp_f32(*r - max);
                }
                let inv = 1.0 / row.iter().map(|&r| r as f64).sum::<f64>() as f32;
                let dst = &mut mixed[(g * n + i) * d..(g * n + i + 1) * d];
                for (&r, vj) in row.iter().zip(vg.chunks_exact(d)) {
                    let p = r * inv;
                    for (o, &vv) in dst.iter_mut().zip(vj) {
                        *o += p * vv;
                    }
                }
            }
        }
        self.out.forward(&TokenBlock::new(groups, n, d, mixed)?)
    }
}
