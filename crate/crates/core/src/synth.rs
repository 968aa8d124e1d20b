//! Deterministic synthetic RGB-T sequences: a bright textured square on
//! noise in RGB, a warm square on a cool background in thermal.
//!
//! Frames are rendered on demand from `(seed, frame index)`, so any frame
//! can be reproduced without rendering its predecessors. Pixel values are
//! quantised to multiples of 1/255 so that 8-bit image files roundtrip
//! exactly.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;
use core::str::FromStr;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Motion {
    Static,
    /// Constant velocity, bouncing off the frame border.
    Linear,
}

impl FromStr for Motion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Motion::Static),
            "linear" => Ok(Motion::Linear),
            _ => Err(Error::Input(format!(
                "unknown motion model {s:?} (expected static or linear)"
            ))),
        }
    }
}

impl fmt::Display for Motion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Motion::Static => "static",
            Motion::Linear => "linear",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub target: usize,
    pub motion: Motion,
    /// Frames whose RGB target is occluded: its pixels follow the background
    /// noise distribution exactly.
    pub rgb_degraded: Option<Range<usize>>,
}

impl SynthConfig {
    pub fn new(seed: u64, frames: usize) -> Self {
        Self {
            seed,
            frames,
            width: 320,
            height: 240,
            target: 32,
            motion: Motion::Linear,
            rgb_degraded: None,
        }
    }

    pub fn with_motion(mut self, motion: Motion) -> Self {
        self.motion = motion;
        self
    }

    /// Degrades the second half of the sequence (frames 30–60 of 60).
    pub fn rgb_degraded(mut self) -> Self {
        self.rgb_degraded = Some(self.frames / 2..self.frames);
        self
    }

    pub fn with_size(mut self, width: usize, height: usize) -> Self {
        self.width = width;
        self.height = height;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(Error::Input(format!(
                "need at least 2 frames, got {}",
                self.frames
            )));
        }
        if self.target < 4 || self.target * 2 > self.width.min(self.height) {
            return Err(Error::Input(format!(
                "target side {} does not fit a {}×{} frame",
                self.target, self.width, self.height
            )));
        }
        Ok(())
    }
}

const VELOCITY: (f64, f64) = (2.5, 1.5);

/// Folds `v` into `[0, limit]` as a bouncing trajectory.
fn bounce(v: f64, limit: f64) -> f64 {
    let period = 2.0 * limit;
    let m = v - period * libm::floor(v / period);
    if m <= limit {
        m
    } else {
        period - m
    }
}

#[derive(Debug, Clone)]
pub struct SynthSequence {
    config: SynthConfig,
    gt: Vec<BBox>,
}

impl SynthSequence {
    pub fn new(config: SynthConfig) -> Result<Self> {
        config.validate()?;
        let t = config.target as f64;
        let (lx, ly) = (config.width as f64 - t, config.height as f64 - t);
        let (x0, y0) = (libm::floor(lx / 3.0), libm::floor(ly / 2.0));
        let gt = (0..config.frames)
            .map(|i| {
                let (x, y) = match config.motion {
                    Motion::Static => (x0, y0),
                    Motion::Linear => (
                        libm::round(bounce(x0 + VELOCITY.0 * i as f64, lx)),
                        libm::round(bounce(y0 + VELOCITY.1 * i as f64, ly)),
                    ),
                };
                BBox::new(x, y, t, t)
            })
            .collect();
        Ok(Self { config, gt })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.config.frames
    }

    pub fn is_empty(&self) -> bool {
        self.config.frames == 0
    }

    pub fn ground_truth(&self) -> &[BBox] {
        &self.gt
    }

    pub fn is_degraded(&self, frame: usize) -> bool {
        self.config
            .rgb_degraded
            .as_ref()
            .is_some_and(|r| r.contains(&frame))
    }

    /// RGB and thermal frames, each `[1, 3, H, W]`.
    pub fn render(&self, frame: usize) -> Result<(Tensor, Tensor)> {
        if frame >= self.config.frames {
            return Err(Error::Input(format!(
                "frame {frame} out of range 0..{}",
                self.config.frames
            )));
        }
        let (w, h) = (self.config.width, self.config.height);
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(frame as u64);
        let mut unit = move || (rng.next_u32() >> 8) as f32 / (1u32 << 24) as f32;
        let b = self.gt[frame];
        let (bx, by) = (b.x as isize, b.y as isize);
        let side = self.config.target as isize;
        let degraded = self.is_degraded(frame);
        let quant = |v: f32| libm::roundf(v.clamp(0.0, 1.0) * 255.0) / 255.0;

        let mut rgb = Tensor::zeros([1, 3, h, w]);
        let mut ir = Tensor::zeros([1, 3, h, w]);
        let tint = [1.0f32, 0.9, 0.8];
        for y in 0..h {
            for x in 0..w {
                let (u, v) = (x as isize - bx, y as isize - by);
                let inside = u >= 0 && v >= 0 && u < side && v < side;
                let noise = 0.15 + 0.3 * unit();
                let checker = if inside && ((u / 4 + v / 4) % 2 == 0) {
                    0.08
                } else {
                    -0.08
                };
                let rgb_base = match (inside, degraded) {
                    (true, false) => 0.82 + checker + 0.06 * (unit() - 0.5),
                    (true, true) | (false, _) => noise,
                };
                for (c, t) in tint.iter().enumerate() {
                    let jitter = 0.04 * (unit() - 0.5);
                    rgb.set(0, c, y, x, quant(rgb_base * t + jitter));
                }
                let heat = if inside {
                    0.8 + 0.1 * (unit() - 0.5)
                } else {
                    0.1 + 0.1 * (unit() - 0.5)
                };
                let heat = quant(heat);
                for c in 0..3 {
                    ir.set(0, c, y, x, heat);
                }
            }
        }
        Ok((rgb, ir))
    }
}

/// Contrast of a box against a surrounding ring of half the box size:
/// `|mean(inside) − mean(ring)| / std(ring)` on the channel mean.
pub fn patch_snr(frame: &Tensor, b: &BBox) -> f64 {
    let [_, c, h, w] = frame.dims();
    let margin = b.w.max(b.h) / 2.0;
    let (mut inside, mut ring) = (Vec::new(), Vec::new());
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let v = (0..c).map(|ch| frame.at(0, ch, y, x) as f64).sum::<f64>() / c as f64;
            let in_box = px > b.x && px < b.right() && py > b.y && py < b.bottom();
            let in_outer = px > b.x - margin
                && px < b.right() + margin
                && py > b.y - margin
                && py < b.bottom() + margin;
            if in_box {
                inside.push(v);
            } else if in_outer {
                ring.push(v);
            }
        }
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let (mi, mr) = (mean(&inside), mean(&ring));
    let var = ring.iter().map(|v| (v - mr) * (v - mr)).sum::<f64>() / ring.len() as f64;
    (mi - mr).abs() / libm::sqrt(var).max(1e-12)
}
