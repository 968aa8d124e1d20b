//! Inference loop: template crop at the first frame, then per frame a search
//! crop around the previous box, a forward pass, a Hanning penalty on the
//! classification map, argmax and decoding back to image coordinates.
//!
//! Frames are `[1, 3, H, W]` tensors with values in `[0, 1]`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::head::ScoreMap;
use crate::model::{Model, TemplateCache};
use crate::resize::resize_bilinear;
use crate::tensor::Tensor;

/// Template crop side relative to the target's geometric-mean side.
pub const TEMPLATE_FACTOR: f64 = 2.0;
/// Search crop side relative to the target's geometric-mean side.
pub const SEARCH_FACTOR: f64 = 4.0;
/// Smallest box side the tracker will report.
pub const MIN_SIDE: f64 = 2.0;

/// Where a square crop came from: crop pixel `u` maps to image
/// `origin + u · scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropMeta {
    pub x0: f64,
    pub y0: f64,
    pub scale: f64,
    pub size: usize,
}

impl CropMeta {
    pub fn to_image(&self, b: &BBox) -> BBox {
        BBox::new(
            self.x0 + b.x * self.scale,
            self.y0 + b.y * self.scale,
            b.w * self.scale,
            b.h * self.scale,
        )
    }

    pub fn to_crop(&self, b: &BBox) -> BBox {
        BBox::new(
            (b.x - self.x0) / self.scale,
            (b.y - self.y0) / self.scale,
            b.w / self.scale,
            b.h / self.scale,
        )
    }

    pub fn point_to_image(&self, u: f64, v: f64) -> (f64, f64) {
        (self.x0 + u * self.scale, self.y0 + v * self.scale)
    }

    pub fn point_to_crop(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.x0) / self.scale, (y - self.y0) / self.scale)
    }
}

/// Side of the square crop around `b` for a given context factor.
pub fn crop_side(b: &BBox, factor: f64) -> f64 {
    factor * libm::sqrt(b.w * b.h)
}

/// Cuts a `side`-pixel square centered at `(cx, cy)` (snapped to whole
/// pixels), fills out-of-frame pixels with the per-channel mean of the
/// in-frame part, and resizes it to `out × out`.
pub fn crop_resize(
    frame: &Tensor,
    cx: f64,
    cy: f64,
    side: f64,
    out: usize,
) -> Result<(Tensor, CropMeta)> {
    let [n, c, h, w] = frame.dims();
    if n != 1 {
        return Err(Error::Input(format!("frame batch must be 1, got {n}")));
    }
    if !(side.is_finite() && cx.is_finite() && cy.is_finite()) {
        return Err(Error::NonFinite("crop geometry"));
    }
    let s = (libm::round(side) as usize).max(1);
    let x0 = libm::round(cx - s as f64 / 2.0) as i64;
    let y0 = libm::round(cy - s as f64 / 2.0) as i64;
    let inside = |v: i64, len: usize| v >= 0 && (v as usize) < len;
    let mut window = Tensor::zeros([1, c, s, s]);
    for ch in 0..c {
        let src = frame.plane(0, ch);
        let (mut sum, mut count) = (0.0f64, 0usize);
        for yy in 0..s as i64 {
            let y = y0 + yy;
            if !inside(y, h) {
                continue;
            }
            for xx in 0..s as i64 {
                let x = x0 + xx;
                if inside(x, w) {
                    sum += src[y as usize * w + x as usize] as f64;
                    count += 1;
                }
            }
        }
        let mean = if count > 0 {
            (sum / count as f64) as f32
        } else {
            0.0
        };
        let dst = window.plane_mut(0, ch);
        for yy in 0..s {
            let y = y0 + yy as i64;
            for xx in 0..s {
                let x = x0 + xx as i64;
                dst[yy * s + xx] = if inside(y, h) && inside(x, w) {
                    src[y as usize * w + x as usize]
                } else {
                    mean
                };
            }
        }
    }
    let meta = CropMeta {
        x0: x0 as f64,
        y0: y0 as f64,
        scale: s as f64 / out as f64,
        size: out,
    };
    Ok((resize_bilinear(&window, out, out)?, meta))
}

/// `hanning(n)` as in numpy: `0.5 − 0.5·cos(2πi/(n−1))`, zero at both ends.
pub fn hanning(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * libm::cos(2.0 * core::f64::consts::PI * i as f64 / (n - 1) as f64))
        .collect()
}

/// Outer product of two `hanning(n)` windows, row-major.
pub fn hann_window(n: usize) -> Vec<f64> {
    let h = hanning(n);
    h.iter()
        .flat_map(|a| h.iter().map(move |b| a * b))
        .collect()
}

/// Penalised argmax: first maximum (row-major) of `cls ⊙ window`.
pub fn penalized_argmax(map: &ScoreMap, window: &[f64]) -> (usize, usize) {
    let g = map.grid();
    let mut best = (0, f64::NEG_INFINITY);
    for (i, (&s, &w)) in map.cls.data().iter().zip(window).enumerate() {
        let v = s as f64 * w;
        if v > best.1 {
            best = (i, v);
        }
    }
    (best.0 / g, best.0 % g)
}

/// Maps a score map computed on the crop `meta` to an image box inside a
/// `frame_size = (w, h)` frame. Returns the box, the raw peak score and
/// whether the box had to be widened to [`MIN_SIDE`].
pub fn locate(
    map: &ScoreMap,
    meta: &CropMeta,
    window: &[f64],
    frame_size: (usize, usize),
) -> Result<(BBox, f64, bool)> {
    if !map.cls.all_finite() || !map.reg.all_finite() {
        return Err(Error::NonFinite("score map"));
    }
    let (row, col) = penalized_argmax(map, window);
    let in_crop = map.decode_box(row, col, meta.size as f64)?;
    let raw = meta.to_image(&in_crop);
    let (bbox, degenerate) = raw.clamp_to(frame_size.0 as f64, frame_size.1 as f64, MIN_SIDE);
    let confidence = map.cls.data().iter().fold(0.0f32, |m, &v| m.max(v)) as f64;
    Ok((bbox, confidence, degenerate || !in_crop.is_valid()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackResult {
    pub frame: usize,
    pub bbox: BBox,
    /// Maximum of the raw classification map.
    pub confidence: f64,
    /// The predicted box had to be widened to the minimum side.
    pub degenerate: bool,
}

/// Per-sequence state. The template is fixed after [`TrackerState::init`].
#[derive(Debug, Clone)]
pub struct TrackerState {
    templates: TemplateCache,
    prev: BBox,
    frame_size: (usize, usize),
    last_crop: Option<CropMeta>,
    window: Vec<f64>,
    frame: usize,
}

fn check_frames(rgb: &Tensor, ir: Option<&Tensor>) -> Result<(usize, usize)> {
    let [n, c, h, w] = rgb.dims();
    if n != 1 || c != 3 {
        return Err(Error::Input(format!(
            "RGB frame must be [1, 3, H, W], got {:?}",
            rgb.dims()
        )));
    }
    if let Some(ir) = ir {
        if ir.dims() != rgb.dims() {
            return Err(Error::Input(format!(
                "thermal frame {:?} does not match RGB frame {:?}",
                ir.dims(),
                rgb.dims()
            )));
        }
    }
    Ok((w, h))
}

impl TrackerState {
    pub fn init(model: &Model, rgb: &Tensor, ir: Option<&Tensor>, bbox: BBox) -> Result<Self> {
        let (w, h) = check_frames(rgb, ir)?;
        let (cx, cy) = bbox.center();
        if !bbox.is_valid() || cx < 0.0 || cy < 0.0 || cx >= w as f64 || cy >= h as f64 {
            return Err(Error::Input(format!(
                "initial box {bbox:?} is not inside the {w}×{h} frame"
            )));
        }
        let cfg = model.config();
        let side = crop_side(&bbox, TEMPLATE_FACTOR);
        let (zr, _) = crop_resize(rgb, cx, cy, side, cfg.template_size)?;
        let zi = ir
            .map(|f| crop_resize(f, cx, cy, side, cfg.template_size).map(|c| c.0))
            .transpose()?;
        let templates = model.prepare_templates(&zr, zi.as_ref())?;
        Ok(Self {
            templates,
            prev: bbox,
            frame_size: (w, h),
            last_crop: None,
            window: hann_window(cfg.search_grid()),
            frame: 0,
        })
    }

    pub fn previous(&self) -> BBox {
        self.prev
    }

    pub fn last_crop(&self) -> Option<CropMeta> {
        self.last_crop
    }

    /// Crops the next search region.
    pub fn search_crops(
        &self,
        model: &Model,
        rgb: &Tensor,
        ir: Option<&Tensor>,
    ) -> Result<(Tensor, Option<Tensor>, CropMeta)> {
        let (cx, cy) = self.prev.center();
        let side = crop_side(&self.prev, SEARCH_FACTOR);
        let size = model.config().search_size;
        let (xr, meta) = crop_resize(rgb, cx, cy, side, size)?;
        let xi = ir
            .map(|f| crop_resize(f, cx, cy, side, size).map(|c| c.0))
            .transpose()?;
        Ok((xr, xi, meta))
    }

    pub fn locate(&self, map: &ScoreMap, meta: &CropMeta) -> Result<(BBox, f64, bool)> {
        locate(map, meta, &self.window, self.frame_size)
    }

    pub fn track(
        &mut self,
        model: &Model,
        rgb: &Tensor,
        ir: Option<&Tensor>,
    ) -> Result<TrackResult> {
        if check_frames(rgb, ir)? != self.frame_size {
            return Err(Error::Input("frame size changed mid-sequence".into()));
        }
        let (xr, xi, meta) = self.search_crops(model, rgb, ir)?;
        let map = model.forward_cached(&self.templates, &xr, xi.as_ref())?;
        let (bbox, confidence, degenerate) = self.locate(&map, &meta)?;
        self.prev = bbox;
        self.last_crop = Some(meta);
        self.frame += 1;
        Ok(TrackResult {
            frame: self.frame,
            bbox,
            confidence,
            degenerate,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(h: usize, w: usize) -> Tensor {
        Tensor::from_fn([1, 3, h, w], |[_, c, y, x]| {
            (c * 1000 + y * w + x) as f32 / 10_000.0
        })
    }

    #[test]
    fn hann_shape() {
        let h = hanning(16);
        assert_eq!(h[0], 0.0);
        assert!(h[15].abs() < 1e-15);
        assert!((h[7] - h[8]).abs() < 1e-15);
        assert!(h[7] > 0.95);
        let win = hann_window(16);
        let best = win.iter().cloned().fold(0.0, f64::max);
        assert_eq!(win[7 * 16 + 7], best);
        assert_eq!(win[3], 0.0);
    }

    #[test]
    fn center_peak_beats_equal_border_peak() {
        let mut cls = Tensor::zeros([1, 1, 16, 16]);
        cls.set(0, 0, 0, 5, 0.9);
        cls.set(0, 0, 7, 7, 0.9);
        let map = ScoreMap::new(cls, Tensor::zeros([1, 4, 16, 16])).unwrap();
        assert_eq!(penalized_argmax(&map, &hann_window(16)), (7, 7));
    }

    #[test]
    fn interior_crop_is_plain_subimage_resize() {
        let f = gradient(64, 80);
        let (crop, meta) = crop_resize(&f, 40.0, 30.0, 20.0, 32).unwrap();
        let mut sub = Tensor::zeros([1, 3, 20, 20]);
        for c in 0..3 {
            for y in 0..20 {
                for x in 0..20 {
                    sub.set(0, c, y, x, f.at(0, c, 20 + y, 30 + x));
                }
            }
        }
        assert_eq!(crop, resize_bilinear(&sub, 32, 32).unwrap());
        assert_eq!((meta.x0, meta.y0, meta.scale), (30.0, 20.0, 20.0 / 32.0));
    }

    #[test]
    fn corner_crop_pads_with_mean() {
        let f = gradient(32, 32);
        let (crop, meta) = crop_resize(&f, 0.0, 0.0, 8.0, 8).unwrap();
        assert_eq!((meta.x0, meta.y0), (-4.0, -4.0));
        for c in 0..3 {
            let mut sum = 0.0f64;
            for y in 0..4 {
                for x in 0..4 {
                    sum += f.at(0, c, y, x) as f64;
                }
            }
            let mean = (sum / 16.0) as f32;
            assert_eq!(crop.at(0, c, 0, 0), mean);
            assert_eq!(crop.at(0, c, 7, 7), f.at(0, c, 3, 3));
        }
    }

    #[test]
    fn back_mapping_roundtrip() {
        let meta = CropMeta {
            x0: -13.0,
            y0: 40.0,
            scale: 0.7,
            size: 256,
        };
        for (u, v) in [(0.0, 0.0), (12.5, 200.25), (255.9, 3.3)] {
            let (x, y) = meta.point_to_image(u, v);
            let (a, b) = meta.point_to_crop(x, y);
            assert!((a - u).abs() < 1e-6 && (b - v).abs() < 1e-6);
        }
        let b = BBox::new(10.0, 20.0, 30.0, 40.0);
        let r = meta.to_crop(&meta.to_image(&b));
        assert!((r.x - b.x).abs() < 1e-9 && (r.h - b.h).abs() < 1e-9);
    }

    #[test]
    fn stationary_peak_keeps_previous_box() {
        let prev = BBox::new(100.0, 60.0, 32.0, 32.0);
        let (cx, cy) = prev.center();
        let f = gradient(240, 320);
        let (_, meta) = crop_resize(&f, cx, cy, crop_side(&prev, SEARCH_FACTOR), 256).unwrap();
        let mut cls = Tensor::zeros([1, 1, 16, 16]);
        cls.set(0, 0, 8, 8, 0.8);
        let mut reg = Tensor::zeros([1, 4, 16, 16]);
        reg.set(0, 2, 8, 8, 0.25);
        reg.set(0, 3, 8, 8, 0.25);
        let map = ScoreMap::new(cls, reg).unwrap();
        let (b, conf, flagged) = locate(&map, &meta, &hann_window(16), (320, 240)).unwrap();
        assert!(!flagged);
        assert!((conf - 0.8).abs() < 1e-7);
        for (p, q) in [(b.x, prev.x), (b.y, prev.y), (b.w, prev.w), (b.h, prev.h)] {
            assert!((p - q).abs() < 1e-9, "{b:?}");
        }
    }

    #[test]
    fn search_side_is_four_geometric_mean_sides() {
        let b = BBox::new(0.0, 0.0, 16.0, 36.0);
        assert_eq!(crop_side(&b, SEARCH_FACTOR), 96.0);
    }
}
