//! Hand-constructed "pass-through" weights for smoke tracking without
//! training.
//!
//! Channel 0 of every feature map carries a blurred brightness signal from
//! the input images to the correlation neck; every other channel is held at
//! zero by zero norm scales. Depth-wise kernels are 3×3 box filters,
//! point-wise kernels route channel 0 to channel 0 and the transformers have
//! zero weights, so their residual paths make them identities. The
//! correlation of two such maps is the search brightness scaled by the
//! template's, the neck averages the 64 correlation channels, the fusion
//! gates keep their zero logits (an even blend of the two modalities), and
//! the classification branch turns the blurred fused map into scores. The
//! regression branch predicts a constant box of a quarter of the crop side
//! centred on its cell, which under the 4× search crop is the previous
//! target size.

use crate::config::ModelConfig;
use crate::error::Result;
use crate::model;
use crate::params::Init;
use crate::tensor::Tensor;
use crate::weights::WeightStore;

/// Gain and offset of the classification logit on the normalised fused map.
pub const CLS_GAIN: f32 = 1.0 / 16.0;
pub const CLS_BIAS: f32 = -2.0;
/// Gain of the central difference that nudges the box off the cell centre.
pub const REG_GAIN: f32 = 1.0 / 4.0;

/// `logit(0.25)`: a box side of a quarter of the search crop.
const QUARTER: f32 = -1.098_612_3;

fn box_kernel(dims: [usize; 4], channels: impl Fn(usize) -> bool) -> Tensor {
    let taps = (dims[2] * dims[3]) as f32;
    Tensor::from_fn(dims, |[o, i, _, _]| {
        if channels(o) && i == 0 {
            1.0 / taps
        } else {
            0.0
        }
    })
}

fn param(name: &str, dims: [usize; 4], init: Init) -> Tensor {
    let [out, cin, kh, kw] = dims;
    let leaf = name.rsplit('.').next().unwrap_or(name);
    let owner = name.rsplit('.').nth(1).unwrap_or("");
    if name.contains("transformer.") || name.starts_with("fusion.gate") {
        return match init {
            Init::Ones => Tensor::filled(dims, 1.0),
            _ => Tensor::zeros(dims),
        };
    }
    if name == "head.reg.conv2.bias" {
        return Tensor::new(dims, alloc::vec![0.0, 0.0, QUARTER, QUARTER]).expect("4 outputs");
    }
    if name == "head.reg.conv2.weight" {
        // x offset from the horizontal, y offset from the vertical central
        // difference; the size outputs only see their bias
        return Tensor::from_fn(dims, |[o, i, y, x]| match (o, i, y, x) {
            (0, 0, 1, 2) | (1, 0, 2, 1) => REG_GAIN,
            (0, 0, 1, 0) | (1, 0, 0, 1) => -REG_GAIN,
            _ => 0.0,
        });
    }
    match (owner, leaf) {
        // norm scales: channel 0 only, except the stem's first norm which
        // still sees all three colour channels
        (o, "weight") if o.ends_with("norm") || o.ends_with("norm1") => {
            if name == "backbone.stem.dw_norm.weight" {
                Tensor::filled(dims, 1.0)
            } else {
                Tensor::from_fn(dims, |[c, ..]| if c == 0 { 1.0 } else { 0.0 })
            }
        }
        (_, "bias") if name == "head.cls.conv2.bias" => Tensor::filled(dims, CLS_BIAS),
        (_, "bias") => Tensor::zeros(dims),
        // depth-wise 3×3: box blur on every channel
        (_, "weight") if cin == 1 && kh == 3 => box_kernel(dims, |_| true),
        (_, "weight") if name == "backbone.stem.pw.weight" => {
            Tensor::from_fn(dims, |[o, ..]| if o == 0 { 1.0 / cin as f32 } else { 0.0 })
        }
        (_, "weight") if name.ends_with("adjust.weight") => {
            Tensor::from_fn(dims, |[o, ..]| if o == 0 { 1.0 / cin as f32 } else { 0.0 })
        }
        (_, "weight") if name.starts_with("head.") && name.ends_with("conv1.weight") => {
            box_kernel(dims, |o| o == 0)
        }
        (_, "weight") if name == "head.cls.conv2.weight" => Tensor::from_fn(dims, |[_, i, y, x]| {
            if i == 0 && y == kh / 2 && x == kw / 2 {
                CLS_GAIN
            } else {
                0.0
            }
        }),
        // remaining point-wise convs: channel 0 → channel 0
        (_, "weight") if kh == 1 && kw == 1 && out > 0 => {
            Tensor::from_fn(dims, |[o, i, ..]| if o == 0 && i == 0 { 1.0 } else { 0.0 })
        }
        _ => Tensor::zeros(dims),
    }
}

/// The pass-through store for `config` (any variant).
pub fn passthrough_store(config: &ModelConfig) -> Result<WeightStore> {
    let mut store = WeightStore::new();
    for spec in model::schema(config)? {
        let t = param(&spec.name, spec.dims, spec.init);
        store.insert(spec.name, t);
    }
    Ok(store)
}
