//! Activations and normalisation.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{shape, Result};
use crate::tensor::Tensor;

pub const NORM_EPS: f64 = 1e-5;

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    sigmoid_f64(x as f64) as f32
}

#[inline]
pub fn sigmoid_f64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

#[inline]
pub fn relu(x: f32) -> f32 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Branch-free `e^x` in `f32` (within ~2 ulp of the correctly rounded value),
/// written so loops over it vectorise. Inputs are clamped to `[-87, 88]`.
#[inline]
pub fn exp_f32(x: f32) -> f32 {
    const LOG2E: f32 = core::f32::consts::LOG2_E;
    const LN2_HI: f32 = 0.693_145_75;
    const LN2_LO: f32 = 1.428_606_8e-6;
    // adding and removing 1.5·2^23 rounds to the nearest integer
    const ROUND: f32 = 12_582_912.0;
    let x = x.clamp(-87.0, 88.0);
    let n = (x * LOG2E + ROUND) - ROUND;
    let r = x - n * LN2_HI - n * LN2_LO;
    let p = 1.0
        + r * (1.0
            + r * (0.5
                + r * (1.0 / 6.0 + r * (1.0 / 24.0 + r * (1.0 / 120.0 + r * (1.0 / 720.0))))));
    p * f32::from_bits(((n as i32 + 127) as u32) << 23)
}

/// `x · σ(x)`, evaluated in `f32` (it runs on every conv-stage activation).
#[inline]
pub fn silu(x: f32) -> f32 {
    x / (1.0 + exp_f32(-x))
}

pub fn silu_inplace(t: &mut Tensor) {
    for v in t.data_mut() {
        *v = silu(*v);
    }
}

pub fn sigmoid_inplace(t: &mut Tensor) {
    t.map_inplace(sigmoid);
}

/// Mean and biased variance of a slice, both in `f64`.
pub fn mean_var(xs: &[f32]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = xs
        .iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    (mean, var)
}

/// Normalises every contiguous row of length `dim` to zero mean and unit
/// variance, then applies `gamma`/`beta` elementwise.
pub fn layer_norm(x: &[f32], dim: usize, gamma: &[f32], beta: &[f32]) -> Result<Vec<f32>> {
    if dim == 0 || !x.len().is_multiple_of(dim) {
        return Err(shape(
            "layer_norm",
            format!("length {} is not a multiple of dim {}", x.len(), dim),
        ));
    }
    if gamma.len() != dim || beta.len() != dim {
        return Err(shape(
            "layer_norm",
            format!(
                "affine lengths {}/{} do not match dim {}",
                gamma.len(),
                beta.len(),
                dim
            ),
        ));
    }
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks_exact(dim) {
        let (mean, var) = mean_var(row);
        let inv = 1.0 / libm::sqrt(var + NORM_EPS);
        for ((&v, &g), &b) in row.iter().zip(gamma).zip(beta) {
            out.push(((v as f64 - mean) * inv * g as f64 + b as f64) as f32);
        }
    }
    Ok(out)
}

/// Group normalisation over `(C/groups) × H × W` blocks of each batch item,
/// with a per-channel affine.
pub fn group_norm(t: &Tensor, groups: usize, gamma: &[f32], beta: &[f32]) -> Result<Tensor> {
    let [n, c, h, w] = t.dims();
    if groups == 0 || c % groups != 0 {
        return Err(shape(
            "group_norm",
            format!("{} channels not divisible into {} groups", c, groups),
        ));
    }
    if gamma.len() != c || beta.len() != c {
        return Err(shape(
            "group_norm",
            format!(
                "affine lengths {}/{} do not match {} channels",
                gamma.len(),
                beta.len(),
                c
            ),
        ));
    }
    let hw = h * w;
    let cg = c / groups;
    let mut out = t.clone();
    let data = out.data_mut();
    for b in 0..n {
        for g in 0..groups {
            let start = (b * c + g * cg) * hw;
            let block = &t.data()[start..start + cg * hw];
            let (mean, var) = mean_var(block);
            let inv = 1.0 / libm::sqrt(var + NORM_EPS);
            for ci in 0..cg {
                let ch = g * cg + ci;
                let (gm, bt) = (gamma[ch] as f64, beta[ch] as f64);
                let s = start + ci * hw;
                for v in &mut data[s..s + hw] {
                    *v = ((*v as f64 - mean) * inv * gm + bt) as f32;
                }
            }
        }
    }
    Ok(out)
}

/// Numerically stable softmax of a slice, in `f64`.
pub fn softmax(xs: &[f32]) -> Vec<f64> {
    let max = xs.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v)) as f64;
    let exps: Vec<f64> = xs.iter().map(|&v| libm::exp(v as f64 - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
