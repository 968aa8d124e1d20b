//! Training objective: focal classification loss on a Gaussian target plus
//! L1 and GIoU regression terms at the ground-truth cell.

use alloc::format;

use crate::bbox::BBox;
use crate::error::{shape, Error, Result};
use crate::head::{decode_cell, encode_box, ScoreMap};
use crate::tensor::Tensor;

pub const FOCAL_ALPHA: i32 = 2;
pub const FOCAL_BETA: i32 = 4;
pub const LAMBDA_L1: f64 = 5.0;
pub const LAMBDA_GIOU: f64 = 2.0;
const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    pub cls: f64,
    pub l1: f64,
    pub giou: f64,
}

/// CenterNet radius for an object of `w × h` cells at overlap 0.7, floored.
pub fn gaussian_radius(w: f64, h: f64) -> usize {
    let mo = 0.7;
    let root = |a: f64, b: f64, c: f64| (b + libm::sqrt((b * b - 4.0 * a * c).max(0.0))) / 2.0;
    let r1 = root(1.0, h + w, w * h * (1.0 - mo) / (1.0 + mo));
    let r2 = root(4.0, 2.0 * (h + w), (1.0 - mo) * w * h);
    let r3 = root(4.0 * mo, -2.0 * mo * (h + w), (mo - 1.0) * w * h);
    libm::floor(r1.min(r2).min(r3).max(0.0)) as usize
}

/// Target map for a box in crop coordinates: a Gaussian with
/// `σ = (2r + 1) / 6` drawn within radius `r` of the center cell, exactly 1
/// at that cell and 0 elsewhere.
pub fn gaussian_heatmap(gt: &BBox, grid: usize, crop: f64) -> Result<Tensor> {
    let ((row, col), _) = encode_box(gt, grid, crop)?;
    let cell = crop / grid as f64;
    let r = gaussian_radius(gt.w / cell, gt.h / cell);
    let sigma = (2 * r + 1) as f64 / 6.0;
    let mut heat = Tensor::zeros([1, 1, grid, grid]);
    let ri = r as isize;
    for dy in -ri..=ri {
        for dx in -ri..=ri {
            let (y, x) = (row as isize + dy, col as isize + dx);
            if y < 0 || x < 0 || y >= grid as isize || x >= grid as isize {
                continue;
            }
            let v = libm::exp(-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma));
            heat.set(0, 0, y as usize, x as usize, v as f32);
        }
    }
    Ok(heat)
}

/// Penalty-reduced focal loss, normalised by the number of cells where the
/// target equals 1.
pub fn focal_loss(pred: &Tensor, heat: &Tensor) -> Result<f64> {
    if pred.dims() != heat.dims() {
        return Err(shape(
            "focal_loss",
            format!("{:?} vs {:?}", pred.dims(), heat.dims()),
        ));
    }
    let (mut sum, mut positives) = (0.0f64, 0usize);
    for (&p, &y) in pred.data().iter().zip(heat.data()) {
        let (p, y) = (p as f64, y as f64);
        if y == 1.0 {
            positives += 1;
            sum -= libm::pow(1.0 - p, FOCAL_ALPHA as f64) * libm::log(p.max(LOG_FLOOR));
        } else {
            sum -= libm::pow(1.0 - y, FOCAL_BETA as f64)
                * libm::pow(p, FOCAL_ALPHA as f64)
                * libm::log((1.0 - p).max(LOG_FLOOR));
        }
    }
    Ok(sum / positives.max(1) as f64)
}

/// All loss terms for one frame. `gt` is in the coordinates of the
/// `crop`-pixel search crop; `heat` is the classification target.
pub fn total_loss(pred: &ScoreMap, gt: &BBox, heat: &Tensor, crop: f64) -> Result<LossTerms> {
    if !gt.is_valid() {
        return Err(Error::Input(format!(
            "ground-truth box {gt:?} is degenerate"
        )));
    }
    let grid = pred.grid();
    let ((row, col), target) = encode_box(gt, grid, crop)?;
    let cls = focal_loss(&pred.cls, heat)?;
    let reg = pred.regression(row, col).map(f64::from);
    let l1 = reg
        .iter()
        .zip(&target)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / 4.0;
    let giou = 1.0 - decode_cell(row, col, reg, grid, crop).giou(gt);
    let terms = LossTerms {
        total: cls + LAMBDA_L1 * l1 + LAMBDA_GIOU * giou,
        cls,
        l1,
        giou,
    };
    if [terms.total, cls, l1, giou].iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("total_loss"));
    }
    Ok(terms)
}
