//! Tracking benchmark metrics.
//!
//! * precision (PR): share of frames whose center error is ≤ a pixel threshold
//!   (20 px, and 5 px for GTOT-style `pr5`);
//! * success (SR): area under the curve of the share of frames with
//!   IoU ≥ θ, θ = 0, 0.05, …, 1;
//! * normalised precision (NPR): center error divided by the ground-truth
//!   width/height per axis, area under its precision curve over 0..0.5;
//! * MPR / MSR: as PR / SR, but each frame takes the better of the two
//!   modality ground truths.
//!
//! Frames whose ground truth is degenerate are left out entirely. Sequence
//! reports are averaged with equal weight per sequence.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::bbox::BBox;
use crate::error::{Error, Result};

pub const PR_THRESHOLD: f64 = 20.0;
pub const PR5_THRESHOLD: f64 = 5.0;
/// Success curve: θ_j = j / 20, j = 0..=20.
pub const SUCCESS_STEPS: usize = 20;
/// Precision curve: j px, j = 0..=50.
pub const PRECISION_STEPS: usize = 50;
/// Normalised precision curve: j / 100, j = 0..=50.
pub const NORM_STEPS: usize = 50;

pub fn success_threshold(j: usize) -> f64 {
    j as f64 / SUCCESS_STEPS as f64
}

pub fn precision_threshold(j: usize) -> f64 {
    j as f64
}

pub fn norm_threshold(j: usize) -> f64 {
    j as f64 / 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Lasher,
    Rgbt234,
    Gtot,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Lasher, Protocol::Rgbt234, Protocol::Gtot];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Lasher => "lasher",
            Protocol::Rgbt234 => "rgbt234",
            Protocol::Gtot => "gtot",
        }
    }

    /// Whether the protocol needs a thermal ground truth.
    pub fn requires_ir_gt(self) -> bool {
        self == Protocol::Rgbt234
    }

    /// The protocol's headline precision threshold.
    pub fn precision_threshold(self) -> f64 {
        match self {
            Protocol::Gtot => PR5_THRESHOLD,
            _ => PR_THRESHOLD,
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                Error::Input(format!(
                    "unknown protocol {s:?} (expected lasher, rgbt234 or gtot)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Curves {
    pub success: Vec<f64>,
    pub precision: Vec<f64>,
    pub norm_precision: Vec<f64>,
    pub max_success: Option<Vec<f64>>,
    pub max_precision: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub pr: f64,
    pub sr: f64,
    pub npr: f64,
    pub pr5: f64,
    pub mpr: Option<f64>,
    pub msr: Option<f64>,
    /// Frames that entered the computation.
    pub frames: usize,
    pub curves: Curves,
}

/// Trapezoid area under `curve` sampled at uniform `step`, divided by the
/// covered range.
pub fn auc(curve: &[f64]) -> f64 {
    if curve.len() < 2 {
        return curve.first().copied().unwrap_or(0.0);
    }
    let area: f64 = curve.windows(2).map(|w| (w[0] + w[1]) / 2.0).sum();
    area / (curve.len() - 1) as f64
}

struct FrameScores {
    iou: Vec<f64>,
    err: Vec<f64>,
    norm_err: Vec<f64>,
}

fn frame_scores(pred: &[BBox], gt: &[BBox]) -> FrameScores {
    let mut s = FrameScores {
        iou: Vec::new(),
        err: Vec::new(),
        norm_err: Vec::new(),
    };
    for (p, g) in pred.iter().zip(gt) {
        if !g.is_valid() {
            continue;
        }
        if p.is_valid() {
            let (pc, gc) = (p.center(), g.center());
            s.iou.push(p.iou(g));
            s.err.push(p.center_error(g));
            s.norm_err
                .push(libm::hypot((pc.0 - gc.0) / g.w, (pc.1 - gc.1) / g.h));
        } else {
            s.iou.push(0.0);
            s.err.push(f64::INFINITY);
            s.norm_err.push(f64::INFINITY);
        }
    }
    s
}

fn rate(values: &[f64], pass: impl Fn(f64) -> bool) -> f64 {
    values.iter().filter(|&&v| pass(v)).count() as f64 / values.len() as f64
}

fn success_curve(iou: &[f64]) -> Vec<f64> {
    (0..=SUCCESS_STEPS)
        .map(|j| rate(iou, |v| v >= success_threshold(j)))
        .collect()
}

fn precision_curve(err: &[f64]) -> Vec<f64> {
    (0..=PRECISION_STEPS)
        .map(|j| rate(err, |v| v <= precision_threshold(j)))
        .collect()
}

fn check_lengths(pred: &[BBox], gt: &[BBox], what: &str) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::Input(String::from("no predictions to evaluate")));
    }
    if pred.len() != gt.len() {
        return Err(Error::Input(format!(
            "{} predictions but {} {what} ground-truth boxes",
            pred.len(),
            gt.len()
        )));
    }
    Ok(())
}

/// Metrics of one sequence.
pub fn compute_metrics(
    pred: &[BBox],
    gt_rgb: &[BBox],
    gt_ir: Option<&[BBox]>,
    protocol: Protocol,
) -> Result<MetricReport> {
    check_lengths(pred, gt_rgb, "RGB")?;
    if let Some(ir) = gt_ir {
        check_lengths(pred, ir, "thermal")?;
    } else if protocol.requires_ir_gt() {
        return Err(Error::Input(format!(
            "protocol {protocol} needs thermal ground truth"
        )));
    }
    let s = frame_scores(pred, gt_rgb);
    if s.iou.is_empty() {
        return Err(Error::Input(String::from(
            "every ground-truth box is degenerate",
        )));
    }
    let success = success_curve(&s.iou);
    let precision = precision_curve(&s.err);
    let norm_precision: Vec<f64> = (0..=NORM_STEPS)
        .map(|j| rate(&s.norm_err, |v| v <= norm_threshold(j)))
        .collect();
    let mut report = MetricReport {
        pr: rate(&s.err, |v| v <= PR_THRESHOLD),
        sr: auc(&success),
        npr: auc(&norm_precision),
        pr5: rate(&s.err, |v| v <= PR5_THRESHOLD),
        mpr: None,
        msr: None,
        frames: s.iou.len(),
        curves: Curves {
            success,
            precision,
            norm_precision,
            max_success: None,
            max_precision: None,
        },
    };
    if let Some(ir) = gt_ir {
        let mut best_iou = Vec::new();
        let mut best_err = Vec::new();
        for ((p, a), b) in pred.iter().zip(gt_rgb).zip(ir) {
            let gts: Vec<&BBox> = [a, b].into_iter().filter(|g| g.is_valid()).collect();
            if gts.is_empty() {
                continue;
            }
            if p.is_valid() {
                best_iou.push(
                    gts.iter()
                        .map(|g| p.iou(g))
                        .fold(f64::NEG_INFINITY, f64::max),
                );
                best_err.push(
                    gts.iter()
                        .map(|g| p.center_error(g))
                        .fold(f64::INFINITY, f64::min),
                );
            } else {
                best_iou.push(0.0);
                best_err.push(f64::INFINITY);
            }
        }
        if !best_iou.is_empty() {
            let ms = success_curve(&best_iou);
            report.mpr = Some(rate(&best_err, |v| v <= PR_THRESHOLD));
            report.msr = Some(auc(&ms));
            report.curves.max_success = Some(ms);
            report.curves.max_precision = Some(precision_curve(&best_err));
        }
    }
    Ok(report)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

fn mean_curve<'a>(curves: impl Iterator<Item = &'a Vec<f64>> + Clone) -> Vec<f64> {
    let n = curves.clone().count() as f64;
    let len = curves.clone().map(|c| c.len()).max().unwrap_or(0);
    (0..len)
        .map(|i| curves.clone().map(|c| c[i]).sum::<f64>() / n)
        .collect()
}

/// Equal-weight mean over sequences. MPR/MSR are reported only when every
/// sequence has them.
pub fn aggregate(reports: &[MetricReport]) -> Result<MetricReport> {
    if reports.is_empty() {
        return Err(Error::Input(String::from(
            "no sequence reports to aggregate",
        )));
    }
    let all_max = reports.iter().all(|r| r.mpr.is_some() && r.msr.is_some());
    let opt_mean = |f: fn(&MetricReport) -> Option<f64>| {
        all_max.then(|| mean(reports.iter().map(|r| f(r).unwrap_or(0.0))))
    };
    Ok(MetricReport {
        pr: mean(reports.iter().map(|r| r.pr)),
        sr: mean(reports.iter().map(|r| r.sr)),
        npr: mean(reports.iter().map(|r| r.npr)),
        pr5: mean(reports.iter().map(|r| r.pr5)),
        mpr: opt_mean(|r| r.mpr),
        msr: opt_mean(|r| r.msr),
        frames: reports.iter().map(|r| r.frames).sum(),
        curves: Curves {
            success: mean_curve(reports.iter().map(|r| &r.curves.success)),
            precision: mean_curve(reports.iter().map(|r| &r.curves.precision)),
            norm_precision: mean_curve(reports.iter().map(|r| &r.curves.norm_precision)),
            max_success: all_max
                .then(|| mean_curve(reports.iter().filter_map(|r| r.curves.max_success.as_ref()))),
            max_precision: all_max.then(|| {
                mean_curve(
                    reports
                        .iter()
                        .filter_map(|r| r.curves.max_precision.as_ref()),
                )
            }),
        },
    })
}
