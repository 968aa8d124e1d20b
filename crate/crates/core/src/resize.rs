use alloc::format;

use crate::error::{shape, Result};
use crate::tensor::Tensor;

/// Bilinear resampling with the half-pixel (`align_corners = false`)
/// convention. Source coordinates are clamped to the input extent.
pub fn resize_bilinear(input: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    if out_h == 0 || out_w == 0 {
        return Err(shape(
            "resize_bilinear",
            format!("output extent {}x{} must be >= 1", out_h, out_w),
        ));
    }
    let [n, c, ih, iw] = input.dims();
    if ih == out_h && iw == out_w {
        return Ok(input.clone());
    }
    let ys: alloc::vec::Vec<_> = (0..out_h).map(|o| source_taps(o, ih, out_h)).collect();
    let xs: alloc::vec::Vec<_> = (0..out_w).map(|o| source_taps(o, iw, out_w)).collect();
    let mut out = Tensor::zeros([n, c, out_h, out_w]);
    for b in 0..n {
        for ch in 0..c {
            let src = input.plane(b, ch);
            let dst = out.plane_mut(b, ch);
            for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
                for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                    let p00 = src[y0 * iw + x0] as f64;
                    let p01 = src[y0 * iw + x1] as f64;
                    let p10 = src[y1 * iw + x0] as f64;
                    let p11 = src[y1 * iw + x1] as f64;
                    let top = p00 + (p01 - p00) * fx;
                    let bot = p10 + (p11 - p10) * fx;
                    dst[oy * out_w + ox] = (top + (bot - top) * fy) as f32;
                }
            }
        }
    }
    Ok(out)
}

/// Lower/upper source index and interpolation fraction for output index `o`.
fn source_taps(o: usize, input: usize, output: usize) -> (usize, usize, f64) {
    let scale = input as f64 / output as f64;
    let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
    let i0 = (libm::floor(src) as usize).min(input - 1);
    let i1 = (i0 + 1).min(input - 1);
    (i0, i1, src - i0 as f64)
}
