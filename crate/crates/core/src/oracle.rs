//! Naive reference implementations.
//!
//! Each function here is written independently of the optimised code it
//! checks: plain index loops, no shared helpers beyond tensor indexing. The
//! unit tests, the acceptance suite and the `selfcheck` command compare the
//! production kernels against them.

#![allow(clippy::needless_range_loop)]

use alloc::vec;
use alloc::vec::Vec;

use crate::bbox::BBox;
use crate::error::{shape, Result};
use crate::head::ScoreMap;
use crate::loss::LossTerms;
use crate::tensor::{ConvSpec, Tensor};
use crate::tokens::TokenBlock;

/// Reference convolution: the literal six-deep loop with bounds checks.
/// Used as an oracle by the tests and the self-check command.
pub fn conv2d_naive(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&[f32]>,
    spec: &ConvSpec,
) -> Result<Tensor> {
    spec.validate()?;
    let [n, _, ih, iw] = input.dims();
    let oh = spec
        .output_extent(ih, 0)
        .ok_or_else(|| shape("conv2d_naive", "input too small"))?;
    let ow = spec
        .output_extent(iw, 1)
        .ok_or_else(|| shape("conv2d_naive", "input too small"))?;
    let (kh, kw) = spec.kernel;
    let cin_g = spec.in_channels / spec.groups;
    let cout_g = spec.out_channels / spec.groups;
    let mut data = Vec::with_capacity(n * spec.out_channels * oh * ow);
    for b in 0..n {
        for o in 0..spec.out_channels {
            let g = o / cout_g;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias.map_or(0.0, |bb| bb[o] as f64);
                    for ci in 0..cin_g {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * spec.stride + ky) as isize - spec.padding as isize;
                                let ix = (ox * spec.stride + kx) as isize - spec.padding as isize;
                                if iy < 0 || ix < 0 || iy >= ih as isize || ix >= iw as isize {
                                    continue;
                                }
                                acc += weight.at(o, ci, ky, kx) as f64
                                    * input.at(b, g * cin_g + ci, iy as usize, ix as usize) as f64;
                            }
                        }
                    }
                    data.push(acc as f32);
                }
            }
        }
    }
    Tensor::new([n, spec.out_channels, oh, ow], data)
}

/// Literal separable attention on raw score/key/value rows of one group:
/// `A = Σ_i softmax(q)_i · K_i`, `M_i = A ⊙ ReLU(V_i)`.
pub fn separable_rows(q: &[f64], k: &[Vec<f64>], v: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = q.len();
    let mut max = q[0];
    for i in 1..n {
        if q[i] > max {
            max = q[i];
        }
    }
    let mut e = vec![0.0; n];
    let mut z = 0.0;
    for i in 0..n {
        e[i] = libm::exp(q[i] - max);
        z += e[i];
    }
    let d = k[0].len();
    let mut a = vec![0.0; d];
    for i in 0..n {
        for j in 0..d {
            a[j] += e[i] / z * k[i][j];
        }
    }
    let mut m = vec![vec![0.0; d]; n];
    for i in 0..n {
        for j in 0..d {
            let r = if v[i][j] > 0.0 { v[i][j] } else { 0.0 };
            m[i][j] = a[j] * r;
        }
    }
    m
}

fn project(x: &[f64], w: &Tensor, b: &Tensor, row: usize) -> f64 {
    let mut s = b.data()[row] as f64;
    for (c, xv) in x.iter().enumerate() {
        s += w.at(row, c, 0, 0) as f64 * xv;
    }
    s
}

/// Separable attention with its projections, token by token.
/// `w_qkv` is `[1 + 2d, d, 1, 1]`, `w_out` is `[d, d, 1, 1]`.
pub fn separable_attention_loop(
    x: &TokenBlock,
    w_qkv: &Tensor,
    b_qkv: &Tensor,
    w_out: &Tensor,
    b_out: &Tensor,
) -> TokenBlock {
    let (g, n, d) = (x.groups(), x.tokens(), x.dim());
    let mut out = TokenBlock::zeros(g, n, d);
    for gi in 0..g {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|t| (0..d).map(|c| x.at(gi, t, c) as f64).collect())
            .collect();
        let q: Vec<f64> = rows.iter().map(|r| project(r, w_qkv, b_qkv, 0)).collect();
        let k: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| (0..d).map(|j| project(r, w_qkv, b_qkv, 1 + j)).collect())
            .collect();
        let v: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                (0..d)
                    .map(|j| project(r, w_qkv, b_qkv, 1 + d + j))
                    .collect()
            })
            .collect();
        let m = separable_rows(&q, &k, &v);
        for t in 0..n {
            for j in 0..d {
                out.data_mut()[(gi * n + t) * d + j] = project(&m[t], w_out, b_out, j) as f32;
            }
        }
    }
    out
}

/// Scaled dot-product softmax attention, one query at a time in `f64`.
/// `proj` holds the `(weight, bias)` of the q, k, v and output projections.
pub fn softmax_attention_loop(x: &TokenBlock, proj: [(&Tensor, &Tensor); 4]) -> TokenBlock {
    let (g, n, d) = (x.groups(), x.tokens(), x.dim());
    let mut out = TokenBlock::zeros(g, n, d);
    let scale = 1.0 / libm::sqrt(d as f64);
    for gi in 0..g {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|t| (0..d).map(|c| x.at(gi, t, c) as f64).collect())
            .collect();
        let apply = |which: usize, r: &[f64]| -> Vec<f64> {
            let (w, b) = proj[which];
            (0..d).map(|j| project(r, w, b, j)).collect()
        };
        let q: Vec<Vec<f64>> = rows.iter().map(|r| apply(0, r)).collect();
        let k: Vec<Vec<f64>> = rows.iter().map(|r| apply(1, r)).collect();
        let v: Vec<Vec<f64>> = rows.iter().map(|r| apply(2, r)).collect();
        for i in 0..n {
            let mut s = vec![0.0; n];
            for j in 0..n {
                for c in 0..d {
                    s[j] += q[i][c] * k[j][c];
                }
                s[j] *= scale;
            }
            let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = s.iter().map(|v| libm::exp(v - max)).collect();
            let z: f64 = e.iter().sum();
            let mut m = vec![0.0; d];
            for j in 0..n {
                for c in 0..d {
                    m[c] += e[j] / z * v[j][c];
                }
            }
            let o = apply(3, &m);
            for c in 0..d {
                out.data_mut()[(gi * n + i) * d + c] = o[c] as f32;
            }
        }
    }
    out
}

/// `out[t][y][x] = Σ_c template[c][t] · search[c][y][x]`, `t` row-major over
/// template cells.
pub fn xcorr_loop(search: &Tensor, template: &Tensor) -> Tensor {
    let [_, c, h, w] = search.dims();
    let [_, _, th, tw] = template.dims();
    let mut out = Tensor::zeros([1, th * tw, h, w]);
    for ty in 0..th {
        for tx in 0..tw {
            for y in 0..h {
                for x in 0..w {
                    let mut s = 0.0f64;
                    for ch in 0..c {
                        s += template.at(0, ch, ty, tx) as f64 * search.at(0, ch, y, x) as f64;
                    }
                    out.set(0, ty * tw + tx, y, x, s as f32);
                }
            }
        }
    }
    out
}

/// Every benchmark metric computed by brute force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteMetrics {
    pub pr: f64,
    pub sr: f64,
    pub npr: f64,
    pub pr5: f64,
    pub mpr: Option<f64>,
    pub msr: Option<f64>,
}

fn ok(b: &BBox) -> bool {
    b.w > 0.0
        && b.h > 0.0
        && b.x.is_finite()
        && b.y.is_finite()
        && b.w.is_finite()
        && b.h.is_finite()
}

fn overlap(a: &BBox, b: &BBox) -> f64 {
    let x1 = if a.x > b.x { a.x } else { b.x };
    let y1 = if a.y > b.y { a.y } else { b.y };
    let x2 = if a.x + a.w < b.x + b.w {
        a.x + a.w
    } else {
        b.x + b.w
    };
    let y2 = if a.y + a.h < b.y + b.h {
        a.y + a.h
    } else {
        b.y + b.h
    };
    let iw = if x2 > x1 { x2 - x1 } else { 0.0 };
    let ih = if y2 > y1 { y2 - y1 } else { 0.0 };
    let inter = iw * ih;
    inter / (a.w * a.h + b.w * b.h - inter)
}

fn dist(a: &BBox, b: &BBox) -> f64 {
    let dx = (a.x + a.w / 2.0) - (b.x + b.w / 2.0);
    let dy = (a.y + a.h / 2.0) - (b.y + b.h / 2.0);
    libm::sqrt(dx * dx + dy * dy)
}

fn ndist(a: &BBox, g: &BBox) -> f64 {
    let dx = ((a.x + a.w / 2.0) - (g.x + g.w / 2.0)) / g.w;
    let dy = ((a.y + a.h / 2.0) - (g.y + g.h / 2.0)) / g.h;
    libm::sqrt(dx * dx + dy * dy)
}

fn trapezoid(ys: &[f64], span: f64) -> f64 {
    let step = span / (ys.len() - 1) as f64;
    let mut area = 0.0;
    for i in 0..ys.len() - 1 {
        area += 0.5 * (ys[i] + ys[i + 1]) * step;
    }
    area / span
}

pub fn metrics_brute(pred: &[BBox], gt: &[BBox], gt_ir: Option<&[BBox]>) -> BruteMetrics {
    let mut ious = Vec::new();
    let mut errs = Vec::new();
    let mut nerrs = Vec::new();
    for i in 0..pred.len() {
        if !ok(&gt[i]) {
            continue;
        }
        if ok(&pred[i]) {
            ious.push(overlap(&pred[i], &gt[i]));
            errs.push(dist(&pred[i], &gt[i]));
            nerrs.push(ndist(&pred[i], &gt[i]));
        } else {
            ious.push(0.0);
            errs.push(f64::INFINITY);
            nerrs.push(f64::INFINITY);
        }
    }
    let frac = |xs: &[f64], keep: &dyn Fn(f64) -> bool| {
        let mut c = 0usize;
        for &x in xs {
            if keep(x) {
                c += 1;
            }
        }
        c as f64 / xs.len() as f64
    };
    let success = |xs: &[f64]| {
        let ys: Vec<f64> = (0..=20)
            .map(|j| frac(xs, &|v| v >= j as f64 / 20.0))
            .collect();
        trapezoid(&ys, 1.0)
    };
    let norm: Vec<f64> = (0..=50)
        .map(|j| frac(&nerrs, &|v| v <= j as f64 / 100.0))
        .collect();
    let mut r = BruteMetrics {
        pr: frac(&errs, &|v| v <= 20.0),
        sr: success(&ious),
        npr: trapezoid(&norm, 0.5),
        pr5: frac(&errs, &|v| v <= 5.0),
        mpr: None,
        msr: None,
    };
    if let Some(ir) = gt_ir {
        let mut best_iou = Vec::new();
        let mut best_err = Vec::new();
        for i in 0..pred.len() {
            let (a, b) = (ok(&gt[i]), ok(&ir[i]));
            if !a && !b {
                continue;
            }
            if !ok(&pred[i]) {
                best_iou.push(0.0);
                best_err.push(f64::INFINITY);
                continue;
            }
            let mut bi = -1.0;
            let mut be = f64::INFINITY;
            if a {
                bi = overlap(&pred[i], &gt[i]);
                be = dist(&pred[i], &gt[i]);
            }
            if b {
                let o = overlap(&pred[i], &ir[i]);
                let e = dist(&pred[i], &ir[i]);
                if o > bi {
                    bi = o;
                }
                if e < be {
                    be = e;
                }
            }
            best_iou.push(bi);
            best_err.push(be);
        }
        if !best_iou.is_empty() {
            r.mpr = Some(frac(&best_err, &|v| v <= 20.0));
            r.msr = Some(success(&best_iou));
        }
    }
    r
}

/// The loss written out term by term. `gt` is in crop coordinates.
pub fn loss_loop(pred: &ScoreMap, gt: &BBox, heat: &Tensor, crop: f64) -> LossTerms {
    let g = pred.grid();
    let mut cls = 0.0;
    let mut pos = 0.0;
    for y in 0..g {
        for x in 0..g {
            let p = pred.cls.at(0, 0, y, x) as f64;
            let t = heat.at(0, 0, y, x) as f64;
            if t == 1.0 {
                pos += 1.0;
                cls += -(1.0 - p) * (1.0 - p) * libm::log(if p > 1e-12 { p } else { 1e-12 });
            } else {
                let q = 1.0 - p;
                let w = (1.0 - t) * (1.0 - t) * (1.0 - t) * (1.0 - t);
                cls += -w * p * p * libm::log(if q > 1e-12 { q } else { 1e-12 });
            }
        }
    }
    if pos < 1.0 {
        pos = 1.0;
    }
    cls /= pos;
    let cell = crop / g as f64;
    let cx = gt.x + gt.w / 2.0;
    let cy = gt.y + gt.h / 2.0;
    let col = libm::floor(cx / cell) as usize;
    let row = libm::floor(cy / cell) as usize;
    let target = [
        cx / cell - col as f64,
        cy / cell - row as f64,
        gt.w / crop,
        gt.h / crop,
    ];
    let mut l1 = 0.0;
    let mut r = [0.0; 4];
    for c in 0..4 {
        r[c] = pred.reg.at(0, c, row, col) as f64;
        l1 += (r[c] - target[c]).abs();
    }
    l1 /= 4.0;
    let pcx = (col as f64 + r[0]) * cell;
    let pcy = (row as f64 + r[1]) * cell;
    let pb = BBox::new(
        pcx - r[2] * crop / 2.0,
        pcy - r[3] * crop / 2.0,
        r[2] * crop,
        r[3] * crop,
    );
    let inter_w = (pb.x + pb.w).min(gt.x + gt.w) - pb.x.max(gt.x);
    let inter_h = (pb.y + pb.h).min(gt.y + gt.h) - pb.y.max(gt.y);
    let inter = inter_w.max(0.0) * inter_h.max(0.0);
    let union = pb.w * pb.h + gt.w * gt.h - inter;
    let hull_w = (pb.x + pb.w).max(gt.x + gt.w) - pb.x.min(gt.x);
    let hull_h = (pb.y + pb.h).max(gt.y + gt.h) - pb.y.min(gt.y);
    let hull = hull_w * hull_h;
    let giou = 1.0 - (inter / union - (hull - union) / hull);
    LossTerms {
        total: cls + 5.0 * l1 + 2.0 * giou,
        cls,
        l1,
        giou,
    }
}

/// Unfold / concatenate / attend / split / fold written with explicit index
/// arithmetic. Each entry of `pairs` is one modality's `(search, template)`;
/// within a modality template tokens come first. Modalities are joined along
/// the embedding axis (`embedding = true`) or the token axis, then `mix`
/// runs once on the joint block. Returns `(search, template)` per modality.
pub fn joint_tokens_loop(
    pairs: &[(&Tensor, &Tensor)],
    patch: usize,
    embedding: bool,
    mix: impl Fn(&TokenBlock) -> Result<TokenBlock>,
) -> Result<Vec<(Tensor, Tensor)>> {
    let (search, template) = pairs[0];
    let c = search.channels();
    if pairs
        .iter()
        .any(|(s, t)| s.channels() != c || t.channels() != c)
    {
        return Err(shape("joint_tokens_loop", "channel mismatch"));
    }
    let m = pairs.len();
    let p = patch;
    let (sh, sw, th, tw) = (
        search.height(),
        search.width(),
        template.height(),
        template.width(),
    );
    let (ns, nt) = (sh * sw / (p * p), th * tw / (p * p));
    let n = nt + ns;
    let (tokens, width) = if embedding { (n, m * c) } else { (m * n, c) };
    // (token, channel) of modality `mi`'s local token `t`, channel `ch`
    let place = |mi: usize, t: usize, ch: usize| {
        if embedding {
            (t, mi * c + ch)
        } else {
            (mi * n + t, ch)
        }
    };
    let mut data = vec![0f32; p * p * tokens * width];
    // group = pixel offset inside the patch, token = patch index
    for off in 0..p * p {
        let (dy, dx) = (off / p, off % p);
        for (mi, (s_map, t_map)) in pairs.iter().enumerate() {
            for t in 0..n {
                let (map, w, idx) = if t < nt {
                    (t_map, tw, t)
                } else {
                    (s_map, sw, t - nt)
                };
                let per_row = w / p;
                let (py, px) = (idx / per_row, idx % per_row);
                for ch in 0..c {
                    let (jt, jc) = place(mi, t, ch);
                    data[(off * tokens + jt) * width + jc] =
                        map.at(0, ch, py * p + dy, px * p + dx);
                }
            }
        }
    }
    let mixed = mix(&TokenBlock::new(p * p, tokens, width, data)?)?;
    if mixed.dim() != width || mixed.tokens() != tokens {
        return Err(shape(
            "joint_tokens_loop",
            "mixer changed the block extents",
        ));
    }
    let mut out = Vec::new();
    for mi in 0..m {
        let mut s_out = Tensor::zeros([1, c, sh, sw]);
        let mut t_out = Tensor::zeros([1, c, th, tw]);
        for off in 0..p * p {
            let (dy, dx) = (off / p, off % p);
            for t in 0..n {
                for ch in 0..c {
                    let (jt, jc) = place(mi, t, ch);
                    let v = mixed.at(off, jt, jc);
                    if t < nt {
                        let per_row = tw / p;
                        t_out.set(0, ch, (t / per_row) * p + dy, (t % per_row) * p + dx, v);
                    } else {
                        let per_row = sw / p;
                        let i = t - nt;
                        s_out.set(0, ch, (i / per_row) * p + dy, (i % per_row) * p + dx, v);
                    }
                }
            }
        }
        out.push((s_out, t_out));
    }
    Ok(out)
}
