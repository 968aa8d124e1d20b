//! Classification and regression branches, and box decoding.

use alloc::format;

use crate::attention::TransformerStack;
use crate::bbox::BBox;
use crate::config::ModelConfig;
use crate::error::{shape, Error, Result};
use crate::layers::{ConvLayer, GroupNorm};
use crate::ops::{sigmoid_inplace, silu_inplace};
use crate::params::Params;
use crate::tensor::{ConvSpec, Tensor};
use crate::tokens::{fold, unfold};

/// Head output on the search grid.
///
/// `cls` is `[1, 1, G, G]`; `reg` is `[1, 4, G, G]` holding the sub-cell
/// center offset (x, y) and the box size (w, h) as fractions of the crop.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    pub cls: Tensor,
    pub reg: Tensor,
}

impl ScoreMap {
    pub fn new(cls: Tensor, reg: Tensor) -> Result<Self> {
        let [_, _, g, gw] = cls.dims();
        if cls.dims() != [1, 1, g, g] || reg.dims() != [1, 4, g, gw] {
            return Err(shape(
                "score_map",
                format!(
                    "cls {:?} / reg {:?} must be [1,1,G,G] / [1,4,G,G]",
                    cls.dims(),
                    reg.dims()
                ),
            ));
        }
        Ok(Self { cls, reg })
    }

    pub fn grid(&self) -> usize {
        self.cls.height()
    }

    pub fn score(&self, row: usize, col: usize) -> f32 {
        self.cls.at(0, 0, row, col)
    }

    /// `[offset_x, offset_y, w, h]` at a cell.
    pub fn regression(&self, row: usize, col: usize) -> [f32; 4] {
        core::array::from_fn(|c| self.reg.at(0, c, row, col))
    }

    /// Box predicted at `(row, col)` in the coordinates of a `crop`-pixel
    /// square crop: center = (cell + offset) / G · crop, size = (w, h) · crop.
    pub fn decode_box(&self, row: usize, col: usize, crop: f64) -> Result<BBox> {
        let g = self.grid();
        if row >= g || col >= g {
            return Err(Error::Input(format!(
                "cell ({row}, {col}) outside the {g}×{g} grid"
            )));
        }
        Ok(decode_cell(
            row,
            col,
            self.regression(row, col).map(f64::from),
            g,
            crop,
        ))
    }
}

/// Box for regression values `[offset_x, offset_y, w, h]` at a grid cell.
pub fn decode_cell(row: usize, col: usize, reg: [f64; 4], grid: usize, crop: f64) -> BBox {
    let [ox, oy, w, h] = reg;
    let cell = crop / grid as f64;
    BBox::from_center(
        (col as f64 + ox) * cell,
        (row as f64 + oy) * cell,
        w * crop,
        h * crop,
    )
}

/// Inverse of [`ScoreMap::decode_box`]: the cell containing the box center
/// and the regression target there.
pub fn encode_box(b: &BBox, grid: usize, crop: f64) -> Result<((usize, usize), [f64; 4])> {
    let (cx, cy) = b.center();
    let cell = crop / grid as f64;
    let (fx, fy) = (cx / cell, cy / cell);
    if !(fx >= 0.0 && fy >= 0.0 && fx < grid as f64 && fy < grid as f64) {
        return Err(Error::Input(format!(
            "box center ({cx}, {cy}) outside the {crop}px crop"
        )));
    }
    let (col, row) = (fx as usize, fy as usize);
    Ok((
        (row, col),
        [fx - col as f64, fy - row as f64, b.w / crop, b.h / crop],
    ))
}

/// conv 3×3 → norm → SiLU → one transformer layer over patch tokens →
/// conv 3×3 → sigmoid.
#[derive(Debug, Clone)]
pub struct HeadBranch {
    conv1: ConvLayer,
    norm1: GroupNorm,
    transformer: TransformerStack,
    conv2: ConvLayer,
    patch: usize,
}

impl HeadBranch {
    pub fn build(p: &mut Params, cfg: &ModelConfig, outputs: usize) -> Self {
        let (cin, hid) = (cfg.fusion_dim, cfg.head_dim);
        Self {
            conv1: ConvLayer::build(
                &mut p.sub("conv1"),
                ConvSpec::new(cin, hid, 3).with_padding(1),
                false,
            ),
            norm1: GroupNorm::build(&mut p.sub("norm1"), hid),
            transformer: TransformerStack::build(
                &mut p.sub("transformer"),
                1,
                hid,
                cfg.ffn_expansion,
            ),
            conv2: ConvLayer::build(
                &mut p.sub("conv2"),
                ConvSpec::new(hid, outputs, 3).with_padding(1),
                true,
            ),
            patch: cfg.head_patch,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = self.norm1.forward(&self.conv1.forward(x)?)?;
        silu_inplace(&mut h);
        let t = self.transformer.forward(&unfold(&h, self.patch)?)?;
        let h = fold(&t, h.height(), h.width(), self.patch)?;
        let mut y = self.conv2.forward(&h)?;
        sigmoid_inplace(&mut y);
        Ok(y)
    }
}

#[derive(Debug, Clone)]
pub struct Head {
    cls: HeadBranch,
    reg: HeadBranch,
}

impl Head {
    pub fn build(p: &mut Params, cfg: &ModelConfig) -> Self {
        Self {
            cls: HeadBranch::build(&mut p.sub("cls"), cfg, 1),
            reg: HeadBranch::build(&mut p.sub("reg"), cfg, 4),
        }
    }

    pub fn forward(&self, fused: &Tensor) -> Result<ScoreMap> {
        let map = ScoreMap::new(self.cls.forward(fused)?, self.reg.forward(fused)?)?;
        if !map.cls.all_finite() || !map.reg.all_finite() {
            return Err(Error::NonFinite("head"));
        }
        Ok(map)
    }
}
