//! Patch tokens.
//!
//! A feature map `C × H × W` cut into `p × p` patches becomes a
//! [`TokenBlock`] with `groups = p²` (one group per pixel offset inside a
//! patch), `tokens = H·W / p²` (one token per patch) and `dim = C`. Attention
//! mixes tokens within a group; every linear layer acts on the `dim` axis.
//! Batch items are stacked along the group axis.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::conv::gemm;
use crate::error::{shape, Result};
use crate::ops;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TokenBlock {
    groups: usize,
    tokens: usize,
    dim: usize,
    /// `[group][token][dim]`, row-major.
    data: Vec<f32>,
}

impl TokenBlock {
    pub fn new(groups: usize, tokens: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if groups == 0 || tokens == 0 || dim == 0 {
            return Err(shape(
                "token_block",
                format!("empty extent ({groups}, {tokens}, {dim})"),
            ));
        }
        if groups * tokens * dim != data.len() {
            return Err(shape(
                "token_block",
                format!(
                    "({groups}, {tokens}, {dim}) needs {} values, got {}",
                    groups * tokens * dim,
                    data.len()
                ),
            ));
        }
        Ok(Self {
            groups,
            tokens,
            dim,
            data,
        })
    }

    pub fn zeros(groups: usize, tokens: usize, dim: usize) -> Self {
        Self {
            groups,
            tokens,
            dim,
            data: vec![0.0; groups * tokens * dim],
        }
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn tokens(&self) -> usize {
        self.tokens
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn at(&self, g: usize, t: usize, d: usize) -> f32 {
        self.data[(g * self.tokens + t) * self.dim + d]
    }

    /// The `tokens × dim` slab of one group.
    pub fn group(&self, g: usize) -> &[f32] {
        let s = self.tokens * self.dim;
        &self.data[g * s..(g + 1) * s]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &TokenBlock) -> Result<()> {
        self.check_same(other, "token add")?;
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &TokenBlock) -> Result<f32> {
        self.check_same(other, "token diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max))
    }

    fn check_same(&self, other: &TokenBlock, op: &'static str) -> Result<()> {
        if (self.groups, self.tokens, self.dim) != (other.groups, other.tokens, other.dim) {
            return Err(shape(
                op,
                format!(
                    "({}, {}, {}) vs ({}, {}, {})",
                    self.groups, self.tokens, self.dim, other.groups, other.tokens, other.dim
                ),
            ));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            groups: self.groups,
            tokens: self.tokens,
            dim: self.dim,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Joins blocks along the token axis, in order. Groups and dim must agree.
    pub fn concat_tokens(parts: &[&TokenBlock]) -> Result<TokenBlock> {
        let first = parts
            .first()
            .ok_or_else(|| shape("concat_tokens", "no inputs"))?;
        let (groups, dim) = (first.groups, first.dim);
        if let Some(p) = parts.iter().find(|p| p.groups != groups || p.dim != dim) {
            return Err(shape(
                "concat_tokens",
                format!(
                    "(groups, dim) ({groups}, {dim}) vs ({}, {})",
                    p.groups, p.dim
                ),
            ));
        }
        let tokens: usize = parts.iter().map(|p| p.tokens).sum();
        let mut data = Vec::with_capacity(groups * tokens * dim);
        for g in 0..groups {
            for p in parts {
                data.extend_from_slice(p.group(g));
            }
        }
        TokenBlock::new(groups, tokens, dim, data)
    }

    /// Inverse of [`TokenBlock::concat_tokens`]: cuts the token axis at the given counts.
    pub fn split_tokens(&self, counts: &[usize]) -> Result<Vec<TokenBlock>> {
        if counts.iter().sum::<usize>() != self.tokens || counts.contains(&0) {
            return Err(shape(
                "split_tokens",
                format!(
                    "counts {:?} do not partition {} tokens",
                    counts, self.tokens
                ),
            ));
        }
        let mut out: Vec<Vec<f32>> = counts
            .iter()
            .map(|&c| Vec::with_capacity(self.groups * c * self.dim))
            .collect();
        for g in 0..self.groups {
            let slab = self.group(g);
            let mut t0 = 0;
            for (buf, &c) in out.iter_mut().zip(counts) {
                buf.extend_from_slice(&slab[t0 * self.dim..(t0 + c) * self.dim]);
                t0 += c;
            }
        }
        out.into_iter()
            .zip(counts)
            .map(|(d, &c)| TokenBlock::new(self.groups, c, self.dim, d))
            .collect()
    }

    /// Joins blocks along the embedding axis: each token vector becomes the
    /// concatenation of the parts' vectors.
    pub fn concat_dim(parts: &[&TokenBlock]) -> Result<TokenBlock> {
        let first = parts
            .first()
            .ok_or_else(|| shape("concat_dim", "no inputs"))?;
        let (groups, tokens) = (first.groups, first.tokens);
        if let Some(p) = parts
            .iter()
            .find(|p| p.groups != groups || p.tokens != tokens)
        {
            return Err(shape(
                "concat_dim",
                format!(
                    "(groups, tokens) ({groups}, {tokens}) vs ({}, {})",
                    p.groups, p.tokens
                ),
            ));
        }
        let dim: usize = parts.iter().map(|p| p.dim).sum();
        let mut data = Vec::with_capacity(groups * tokens * dim);
        for row in 0..groups * tokens {
            for p in parts {
                data.extend_from_slice(&p.data[row * p.dim..(row + 1) * p.dim]);
            }
        }
        TokenBlock::new(groups, tokens, dim, data)
    }

    /// Inverse of [`TokenBlock::concat_dim`].
    pub fn split_dim(&self, dims: &[usize]) -> Result<Vec<TokenBlock>> {
        if dims.iter().sum::<usize>() != self.dim || dims.contains(&0) {
            return Err(shape(
                "split_dim",
                format!("dims {:?} do not partition dim {}", dims, self.dim),
            ));
        }
        let rows = self.groups * self.tokens;
        let mut out: Vec<Vec<f32>> = dims.iter().map(|&d| Vec::with_capacity(rows * d)).collect();
        for row in self.data.chunks_exact(self.dim) {
            let mut d0 = 0;
            for (buf, &d) in out.iter_mut().zip(dims) {
                buf.extend_from_slice(&row[d0..d0 + d]);
                d0 += d;
            }
        }
        out.into_iter()
            .zip(dims)
            .map(|(d, &k)| TokenBlock::new(self.groups, self.tokens, k, d))
            .collect()
    }

    /// Affine map on the embedding axis. `weight` is `out_dim × dim`
    /// row-major (a `[out, in, 1, 1]` tensor's data); accumulation is in `f64`.
    pub fn linear(
        &self,
        weight: &[f32],
        bias: Option<&[f32]>,
        out_dim: usize,
    ) -> Result<TokenBlock> {
        if weight.len() != self.dim * out_dim {
            return Err(shape(
                "linear",
                format!(
                    "weight has {} values, expected {} x {}",
                    weight.len(),
                    self.dim,
                    out_dim
                ),
            ));
        }
        if bias.is_some_and(|b| b.len() != out_dim) {
            return Err(shape("linear", format!("bias length != {out_dim}")));
        }
        // Run as `yᵀ = W · xᵀ` through the convolution GEMM kernel.
        let rows = self.groups * self.tokens;
        let din = self.dim;
        let mut xt = vec![0f32; din * rows];
        for (r, xr) in self.data.chunks_exact(din).enumerate() {
            for (i, &v) in xr.iter().enumerate() {
                xt[i * rows + r] = v;
            }
        }
        let mut yt = vec![0f32; out_dim * rows];
        gemm(&xt, weight, bias, din, rows, &mut yt);
        let mut out = vec![0f32; rows * out_dim];
        for (o, yr) in yt.chunks_exact(rows).enumerate() {
            for (r, &v) in yr.iter().enumerate() {
                out[r * out_dim + o] = v;
            }
        }
        TokenBlock::new(self.groups, self.tokens, out_dim, out)
    }

    pub fn layer_norm(&self, gamma: &[f32], beta: &[f32]) -> Result<TokenBlock> {
        let data = ops::layer_norm(&self.data, self.dim, gamma, beta)?;
        TokenBlock::new(self.groups, self.tokens, self.dim, data)
    }
}

/// Cuts each `p × p` patch of a map into one token per group.
pub fn unfold(input: &Tensor, patch: usize) -> Result<TokenBlock> {
    let [n, c, h, w] = input.dims();
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(shape(
            "unfold",
            format!(
                "{}x{} map is not divisible into {}x{} patches",
                h, w, patch, patch
            ),
        ));
    }
    let (nh, nw) = (h / patch, w / patch);
    let p2 = patch * patch;
    let tokens = nh * nw;
    let mut data = vec![0f32; n * p2 * tokens * c];
    for b in 0..n {
        for ch in 0..c {
            let plane = input.plane(b, ch);
            for y in 0..h {
                for x in 0..w {
                    let g = b * p2 + (y % patch) * patch + x % patch;
                    let t = (y / patch) * nw + x / patch;
                    data[(g * tokens + t) * c + ch] = plane[y * w + x];
                }
            }
        }
    }
    TokenBlock::new(n * p2, tokens, c, data)
}

/// Inverse of [`unfold`] for an `h × w` target map.
pub fn fold(tokens: &TokenBlock, h: usize, w: usize, patch: usize) -> Result<Tensor> {
    if patch == 0 || !h.is_multiple_of(patch) || !w.is_multiple_of(patch) {
        return Err(shape(
            "fold",
            format!(
                "{}x{} map is not divisible into {}x{} patches",
                h, w, patch, patch
            ),
        ));
    }
    let p2 = patch * patch;
    let nw = w / patch;
    let count = (h / patch) * nw;
    if tokens.tokens() != count || !tokens.groups().is_multiple_of(p2) {
        return Err(shape(
            "fold",
            format!(
                "block ({}, {}, {}) does not fold to {}x{} with patch {}",
                tokens.groups(),
                tokens.tokens(),
                tokens.dim(),
                h,
                w,
                patch
            ),
        ));
    }
    let n = tokens.groups() / p2;
    let c = tokens.dim();
    let mut out = Tensor::zeros([n, c, h, w]);
    for b in 0..n {
        for ch in 0..c {
            let plane = out.plane_mut(b, ch);
            for y in 0..h {
                for x in 0..w {
                    let g = b * p2 + (y % patch) * patch + x % patch;
                    let t = (y / patch) * nw + x / patch;
                    plane[y * w + x] = tokens.data[(g * count + t) * c + ch];
                }
            }
        }
    }
    Ok(out)
}
