//! 2-D convolution over NCHW tensors with zero padding.
//!
//! Inner products accumulate in `f64` and are rounded to `f32` once per
//! output element.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape, Result};
use crate::par::for_each_chunk;
use crate::tensor::{ConvSpec, Tensor};

pub fn conv2d(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&[f32]>,
    spec: &ConvSpec,
) -> Result<Tensor> {
    spec.validate()?;
    if weight.dims() != spec.weight_dims() {
        return Err(shape(
            "conv2d",
            format!(
                "weight dims {:?} do not match spec {:?} (expected {:?})",
                weight.dims(),
                spec,
                spec.weight_dims()
            ),
        ));
    }
    if input.channels() != spec.in_channels {
        return Err(shape(
            "conv2d",
            format!(
                "input has {} channels, spec expects {}",
                input.channels(),
                spec.in_channels
            ),
        ));
    }
    if let Some(b) = bias {
        if b.len() != spec.out_channels {
            return Err(shape(
                "conv2d",
                format!(
                    "bias length {} != out_channels {}",
                    b.len(),
                    spec.out_channels
                ),
            ));
        }
    }
    let (oh, ow) = match (
        spec.output_extent(input.height(), 0),
        spec.output_extent(input.width(), 1),
    ) {
        (Some(h), Some(w)) => (h, w),
        _ => {
            return Err(shape(
                "conv2d",
                format!(
                    "input {}x{} too small for kernel {:?} with padding {}",
                    input.height(),
                    input.width(),
                    spec.kernel,
                    spec.padding
                ),
            ))
        }
    };

    let n = input.batch();
    let mut out = Tensor::zeros([n, spec.out_channels, oh, ow]);
    let pointwise =
        spec.kernel == (1, 1) && spec.stride == 1 && spec.padding == 0 && spec.groups == 1;
    for b in 0..n {
        let x = input.item(b);
        let chw = spec.out_channels * oh * ow;
        let y = &mut out.data_mut()[b * chw..(b + 1) * chw];
        if pointwise {
            gemm(x, weight.data(), bias, spec.in_channels, oh * ow, y);
        } else if spec.groups == 1 {
            let cols = im2col(x, (input.height(), input.width()), spec, (oh, ow));
            let (kh, kw) = spec.kernel;
            gemm(
                &cols,
                weight.data(),
                bias,
                spec.in_channels * kh * kw,
                oh * ow,
                y,
            );
        } else {
            direct_item(
                x,
                (input.height(), input.width()),
                weight.data(),
                bias,
                spec,
                (oh, ow),
                y,
            );
        }
    }
    Ok(out)
}

const OUT_BLOCK: usize = 4;
const LANES: usize = 8;
/// Pixels per packed input tile.
const TILE: usize = 64;
/// Output channels per parallel work item.
const OUT_CHUNK: usize = 64;

/// `y[o][p] = b[o] + Σ_i w[o][i] · x[i][p]`, with `x` holding `cin` rows of
/// `plane` values and `w` holding one `cin`-long row per output.
///
/// A tile of `TILE` pixels is packed as `[lane group][cin][LANES]` in f64 so
/// that one group's column stays in L1 while `OUT_BLOCK` output rows are
/// accumulated against it in registers.
pub(crate) fn gemm(
    x: &[f32],
    w: &[f32],
    bias: Option<&[f32]>,
    cin: usize,
    plane: usize,
    y: &mut [f32],
) {
    let w: Vec<f64> = w.iter().map(|&v| v as f64).collect();
    for_each_chunk(y, OUT_CHUNK * plane, |chunk, ys| {
        let o_base = chunk * OUT_CHUNK;
        let nout = ys.len() / plane;
        let mut packed = vec![0f64; cin * TILE];
        let mut p0 = 0;
        while p0 < plane {
            let tile = TILE.min(plane - p0);
            let groups = tile / LANES;
            for g in 0..groups {
                for i in 0..cin {
                    let src = &x[i * plane + p0 + g * LANES..i * plane + p0 + (g + 1) * LANES];
                    let dst = &mut packed[(g * cin + i) * LANES..(g * cin + i + 1) * LANES];
                    for (d, &v) in dst.iter_mut().zip(src) {
                        *d = v as f64;
                    }
                }
            }
            let mut j0 = 0;
            while j0 < nout {
                let nb = OUT_BLOCK.min(nout - j0);
                let ws = &w[(o_base + j0) * cin..(o_base + j0 + nb) * cin];
                for g in 0..groups {
                    let col = &packed[g * cin * LANES..(g + 1) * cin * LANES];
                    let mut acc = [[0f64; LANES]; OUT_BLOCK];
                    for (j, row) in acc.iter_mut().enumerate().take(nb) {
                        let b0 = bias.map_or(0.0, |b| b[o_base + j0 + j] as f64);
                        row.iter_mut().for_each(|a| *a = b0);
                    }
                    if nb == OUT_BLOCK {
                        for i in 0..cin {
                            let xv: &[f64; LANES] =
                                col[i * LANES..(i + 1) * LANES].try_into().unwrap();
                            for (j, row) in acc.iter_mut().enumerate() {
                                let wv = ws[j * cin + i];
                                for l in 0..LANES {
                                    row[l] += wv * xv[l];
                                }
                            }
                        }
                    } else {
                        for i in 0..cin {
                            let xv = &col[i * LANES..(i + 1) * LANES];
                            for (j, row) in acc.iter_mut().enumerate().take(nb) {
                                let wv = ws[j * cin + i];
                                for l in 0..LANES {
                                    row[l] += wv * xv[l];
                                }
                            }
                        }
                    }
                    let p = p0 + g * LANES;
                    for (j, row) in acc.iter().enumerate().take(nb) {
                        let dst = &mut ys[(j0 + j) * plane + p..(j0 + j) * plane + p + LANES];
                        for (d, a) in dst.iter_mut().zip(row) {
                            *d = *a as f32;
                        }
                    }
                }
                // pixels left over after the full lane groups
                for q in p0 + groups * LANES..p0 + tile {
                    for j in 0..nb {
                        let mut a = bias.map_or(0.0, |b| b[o_base + j0 + j] as f64);
                        for i in 0..cin {
                            a += ws[j * cin + i] * x[i * plane + q] as f64;
                        }
                        ys[(j0 + j) * plane + q] = a as f32;
                    }
                }
                j0 += nb;
            }
            p0 += tile;
        }
    });
}

/// Unrolls every kernel tap into its own row: row `(c·kh + ky)·kw + kx`
/// holds the (zero-padded) input seen by that tap at each output position.
fn im2col(
    x: &[f32],
    (ih, iw): (usize, usize),
    spec: &ConvSpec,
    (oh, ow): (usize, usize),
) -> Vec<f32> {
    let (kh, kw) = spec.kernel;
    let (stride, pad) = (spec.stride, spec.padding);
    let mut cols = vec![0f32; spec.in_channels * kh * kw * oh * ow];
    for c in 0..spec.in_channels {
        let xp = &x[c * ih * iw..(c + 1) * ih * iw];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = ((c * kh + ky) * kw + kx) * oh * ow;
                let (oy0, oy1) = valid_range(oh, ih, ky, stride, pad);
                let (ox0, ox1) = valid_range(ow, iw, kx, stride, pad);
                for oy in oy0..oy1 {
                    let iy = oy * stride + ky - pad;
                    for ox in ox0..ox1 {
                        cols[row + oy * ow + ox] = xp[iy * iw + ox * stride + kx - pad];
                    }
                }
            }
        }
    }
    cols
}

/// Direct convolution for one batch item, any kernel/stride/padding/groups.
fn direct_item(
    x: &[f32],
    (ih, iw): (usize, usize),
    w: &[f32],
    bias: Option<&[f32]>,
    spec: &ConvSpec,
    (oh, ow): (usize, usize),
    y: &mut [f32],
) {
    let (kh, kw) = spec.kernel;
    let cin_g = spec.in_channels / spec.groups;
    let cout_g = spec.out_channels / spec.groups;
    let stride = spec.stride;
    let pad = spec.padding;
    for_each_chunk(y, oh * ow, |o, plane| {
        let g = o / cout_g;
        let mut acc = vec![bias.map_or(0.0, |b| b[o] as f64); oh * ow];
        for ci in 0..cin_g {
            let c = g * cin_g + ci;
            let xp = &x[c * ih * iw..(c + 1) * ih * iw];
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = w[((o * cin_g + ci) * kh + ky) * kw + kx] as f64;
                    let (oy0, oy1) = valid_range(oh, ih, ky, stride, pad);
                    let (ox0, ox1) = valid_range(ow, iw, kx, stride, pad);
                    for oy in oy0..oy1 {
                        let iy = oy * stride + ky - pad;
                        let row = &xp[iy * iw..(iy + 1) * iw];
                        let arow = &mut acc[oy * ow..(oy + 1) * ow];
                        if stride == 1 {
                            let ix0 = ox0 + kx - pad;
                            let src = &row[ix0..ix0 + (ox1 - ox0)];
                            for (a, &v) in arow[ox0..ox1].iter_mut().zip(src) {
                                *a += wv * v as f64;
                            }
                        } else {
                            for ox in ox0..ox1 {
                                arow[ox] += wv * row[ox * stride + kx - pad] as f64;
                            }
                        }
                    }
                }
            }
        }
        for (dst, a) in plane.iter_mut().zip(&acc) {
            *dst = *a as f32;
        }
    });
}

/// Output indices `o` in `[lo, hi)` for which `o*stride + k - pad` lands inside `[0, input)`.
fn valid_range(out: usize, input: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    // o*stride + k >= pad
    let lo = if k >= pad {
        0
    } else {
        (pad - k).div_ceil(stride)
    };
    // o*stride + k - pad <= input - 1
    let hi = if input + pad < k + 1 {
        0
    } else {
        ((input + pad - k - 1) / stride + 1).min(out)
    };
    (lo.min(hi), hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::conv2d_naive;
    use rand_chacha::ChaCha8Rng;
    use rand_core::{RngCore, SeedableRng};

    fn random(dims: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(dims, |_| {
            (rng.next_u32() as f64 / u32::MAX as f64 * 2.0 - 1.0) as f32
        })
    }

    #[test]
    fn unit_kernel_scales() {
        let x = Tensor::filled([1, 1, 3, 3], 1.0);
        let w = Tensor::new([1, 1, 1, 1], vec![2.0]).unwrap();
        let y = conv2d(&x, &w, None, &ConvSpec::pointwise(1, 1)).unwrap();
        assert_eq!(y.dims(), [1, 1, 3, 3]);
        assert!(y.data().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn zero_input_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::zeros([1, 4, 6, 6]);
        let w = random([8, 4, 3, 3], &mut rng);
        let y = conv2d(
            &x,
            &w,
            Some(&[0.0; 8]),
            &ConvSpec::new(4, 8, 3).with_padding(1),
        )
        .unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_naive_oracle_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random([1, 4, 8, 8], &mut rng);
        let w = random([8, 4, 3, 3], &mut rng);
        for spec in [
            ConvSpec::new(4, 8, 3),
            ConvSpec::new(4, 8, 3).with_padding(1),
            ConvSpec::new(4, 8, 3).with_padding(1).with_stride(2),
        ] {
            let fast = conv2d(&x, &w, None, &spec).unwrap();
            let slow = conv2d_naive(&x, &w, None, &spec).unwrap();
            assert!(fast.max_abs_diff(&slow).unwrap() <= 1e-5);
        }
    }

    #[test]
    fn matches_naive_oracle_pointwise_and_depthwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = random([2, 6, 5, 7], &mut rng);
        let w = random([10, 6, 1, 1], &mut rng);
        let b = random([10, 1, 1, 1], &mut rng);
        let spec = ConvSpec::pointwise(6, 10);
        let fast = conv2d(&x, &w, Some(b.data()), &spec).unwrap();
        let slow = conv2d_naive(&x, &w, Some(b.data()), &spec).unwrap();
        assert!(fast.max_abs_diff(&slow).unwrap() <= 1e-6);

        let wd = random([6, 1, 3, 3], &mut rng);
        for stride in [1, 2] {
            let spec = ConvSpec::depthwise(6, 3, stride);
            let fast = conv2d(&x, &wd, None, &spec).unwrap();
            let slow = conv2d_naive(&x, &wd, None, &spec).unwrap();
            assert_eq!(fast.dims(), slow.dims());
            assert!(fast.max_abs_diff(&slow).unwrap() <= 1e-6);
        }
    }

    #[test]
    fn dimension_mismatch_names_extents() {
        let x = Tensor::zeros([1, 3, 4, 4]);
        let w = Tensor::zeros([8, 4, 3, 3]);
        let err = conv2d(&x, &w, None, &ConvSpec::new(4, 8, 3)).unwrap_err();
        assert!(alloc::format!("{err}").contains("3 channels"));
        let err = conv2d(&x, &w, None, &ConvSpec::new(3, 8, 3)).unwrap_err();
        assert!(alloc::format!("{err}").contains("[8, 4, 3, 3]"));
    }

    #[test]
    fn valid_range_covers_padding() {
        // 3x3, pad 1, stride 1 on 5 wide: kx=0 -> o in [1,5), kx=2 -> [0,4)
        assert_eq!(valid_range(5, 5, 0, 1, 1), (1, 5));
        assert_eq!(valid_range(5, 5, 2, 1, 1), (0, 4));
        // stride 2, pad 1, in 8, out 4: kx=0 -> ix = 2o-1 >= 0 -> o>=1
        assert_eq!(valid_range(4, 8, 0, 2, 1), (1, 4));
    }
}
