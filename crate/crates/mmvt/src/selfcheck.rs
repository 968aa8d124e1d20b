//! Oracle suites: the fast kernels against literal loop transcriptions.
//! Each suite draws its cases from a fixed seed, so a failure reproduces.

use mmvt_core::attention::{Linear, SeparableAttention};
use mmvt_core::head::encode_box;
use mmvt_core::loss::{gaussian_heatmap, total_loss, LAMBDA_GIOU, LAMBDA_L1};
use mmvt_core::metrics::{compute_metrics, Protocol};
use mmvt_core::neck::pw_xcorr;
use mmvt_core::oracle::{conv2d_naive, metrics_brute, separable_attention_loop, xcorr_loop};
use mmvt_core::tokens::{fold, unfold};
use mmvt_core::{conv, BBox, ConvSpec, ScoreMap, Tensor, TokenBlock};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub const ATTENTION_CASES: usize = 100;
pub const ATTENTION_TOLERANCE: f32 = 1e-5;
pub const METRIC_CASES: usize = 100;
pub const METRIC_TOLERANCE: f64 = 1e-10;
pub const LOSS_CASES: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self {
            name,
            passed,
            detail,
        }
    }
}

struct Draw(ChaCha8Rng);

impl Draw {
    fn new(seed: u64) -> Self {
        Draw(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform in `[0, 1)`.
    fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn sym(&mut self, scale: f64) -> f32 {
        ((2.0 * self.unit() - 1.0) * scale) as f32
    }

    /// Uniform in `lo..=hi`.
    fn int(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.0.next_u64() % (hi - lo + 1) as u64) as usize
    }

    fn tensor(&mut self, dims: [usize; 4], scale: f64) -> Tensor {
        Tensor::from_fn(dims, |_| self.sym(scale))
    }
}

/// Separable attention (with its projections) against the token loop on
/// random `k ≤ 64`, `d ≤ 32` instances.
pub fn attention_oracle(seed: u64) -> Check {
    let mut draw = Draw::new(seed);
    let mut worst = 0f32;
    for case in 0..ATTENTION_CASES {
        let (groups, k, d) = (draw.int(1, 2), draw.int(1, 64), draw.int(1, 32));
        // fan-in scaled projections on unit-scale tokens, as in the model
        let s = 1.0 / (d as f64).sqrt();
        let (wq, bq) = (
            draw.tensor([1 + 2 * d, d, 1, 1], s),
            draw.tensor([1 + 2 * d, 1, 1, 1], s),
        );
        let (wo, bo) = (draw.tensor([d, d, 1, 1], s), draw.tensor([d, 1, 1, 1], s));
        let x = TokenBlock::new(
            groups,
            k,
            d,
            (0..groups * k * d).map(|_| draw.sym(1.0)).collect(),
        )
        .expect("sized");
        let result = Linear::from_tensors(&wq, Some(&bq))
            .and_then(|q| SeparableAttention::from_parts(q, Linear::from_tensors(&wo, Some(&bo))?))
            .and_then(|layer| layer.forward(&x))
            .and_then(|y| y.max_abs_diff(&separable_attention_loop(&x, &wq, &bq, &wo, &bo)));
        match result {
            Ok(err) if err <= ATTENTION_TOLERANCE => worst = worst.max(err),
            Ok(err) => return Check::new(
                "attention",
                false,
                format!(
                    "case {case} (k={k}, d={d}): max-abs error {err:e} > {ATTENTION_TOLERANCE:e}"
                ),
            ),
            Err(e) => return Check::new("attention", false, format!("case {case}: {e}")),
        }
    }
    Check::new(
        "attention",
        true,
        format!("{ATTENTION_CASES} cases, max-abs error {worst:.2e}"),
    )
}

/// Packed convolution against the direct loop over standard, strided,
/// padded, grouped and depth-wise layers.
pub fn conv_oracle(seed: u64) -> Check {
    let mut draw = Draw::new(seed);
    let mut worst = 0f32;
    for case in 0..40 {
        let groups = [1, 1, 2, 4][case % 4];
        let cin = groups * draw.int(1, 4);
        let cout = groups * draw.int(1, 4);
        let k = [1, 3, 5][draw.int(0, 2)];
        let spec = ConvSpec::new(cin, cout, k)
            .with_stride(draw.int(1, 2))
            .with_padding(draw.int(0, k / 2))
            .with_groups(groups);
        let spec = if case % 5 == 4 {
            ConvSpec::depthwise(cin, 3, draw.int(1, 2))
        } else {
            spec
        };
        let (h, w) = (draw.int(k, 13), draw.int(k, 13));
        let x = draw.tensor([1, spec.in_channels, h, w], 1.0);
        let fan_in = (spec.in_channels / spec.groups * k * k) as f64;
        let weight = draw.tensor(spec.weight_dims(), 1.0 / fan_in.sqrt());
        let bias: Vec<f32> = (0..spec.out_channels).map(|_| draw.sym(0.5)).collect();
        let err = conv::conv2d(&x, &weight, Some(&bias), &spec)
            .and_then(|y| y.max_abs_diff(&conv2d_naive(&x, &weight, Some(&bias), &spec)?));
        match err {
            Ok(e) if e <= 1e-5 => worst = worst.max(e),
            Ok(e) => {
                return Check::new("conv", false, format!("case {case} {spec:?}: error {e:e}"))
            }
            Err(e) => return Check::new("conv", false, format!("case {case} {spec:?}: {e}")),
        }
    }
    Check::new("conv", true, format!("40 cases, max-abs error {worst:.2e}"))
}

/// Point-wise correlation against the cell-by-cell loop.
pub fn xcorr_oracle(seed: u64) -> Check {
    let mut draw = Draw::new(seed);
    let mut worst = 0f32;
    for case in 0..20 {
        let c = draw.int(1, 16);
        let (th, sh) = (draw.int(1, 4), draw.int(2, 10));
        let search = draw.tensor([1, c, sh, sh + 1], 1.0);
        let template = draw.tensor([1, c, th, th], 1.0);
        match pw_xcorr(&search, &template)
            .and_then(|y| y.max_abs_diff(&xcorr_loop(&search, &template)))
        {
            Ok(e) if e <= 1e-5 => worst = worst.max(e),
            Ok(e) => return Check::new("xcorr", false, format!("case {case}: error {e:e}")),
            Err(e) => return Check::new("xcorr", false, format!("case {case}: {e}")),
        }
    }
    Check::new(
        "xcorr",
        true,
        format!("20 cases, max-abs error {worst:.2e}"),
    )
}

/// Unfold then fold is the identity.
pub fn unfold_roundtrip(seed: u64) -> Check {
    let mut draw = Draw::new(seed);
    for case in 0..20 {
        let p = draw.int(1, 3);
        let (c, h, w) = (draw.int(1, 6), p * draw.int(1, 5), p * draw.int(1, 5));
        let x = draw.tensor([1, c, h, w], 1.0);
        match unfold(&x, p).and_then(|t| fold(&t, h, w, p)) {
            Ok(y) if y == x => {}
            Ok(_) => {
                return Check::new(
                    "unfold",
                    false,
                    format!("case {case}: fold(unfold(x)) != x"),
                )
            }
            Err(e) => return Check::new("unfold", false, format!("case {case}: {e}")),
        }
    }
    Check::new("unfold", true, "20 cases exact".into())
}

fn random_box(draw: &mut Draw) -> BBox {
    BBox::new(
        300.0 * draw.unit(),
        200.0 * draw.unit(),
        1.0 + 80.0 * draw.unit(),
        1.0 + 80.0 * draw.unit(),
    )
}

/// Metrics against the brute-force reference on random prediction/ground
/// truth sequences (with invalid predictions and degenerate frames mixed
/// in), plus the perfect tracker.
pub fn metric_oracle(seed: u64) -> Check {
    let mut draw = Draw::new(seed);
    let mut worst = 0f64;
    for case in 0..METRIC_CASES {
        let n = draw.int(1, 60);
        let gt: Vec<BBox> = (0..n).map(|_| random_box(&mut draw)).collect();
        let mut gt_ir: Vec<BBox> = gt
            .iter()
            .map(|b| {
                BBox::new(
                    b.x + 4.0 * draw.unit() - 2.0,
                    b.y + 4.0 * draw.unit() - 2.0,
                    b.w,
                    b.h,
                )
            })
            .collect();
        let mut gt = gt;
        let pred: Vec<BBox> = gt
            .iter()
            .map(|b| match draw.int(0, 9) {
                0 => BBox::new(b.x, b.y, 0.0, b.h),
                1 => random_box(&mut draw),
                _ => {
                    let s = 30.0 * draw.unit();
                    BBox::new(
                        b.x + s * (draw.unit() - 0.5),
                        b.y + s * (draw.unit() - 0.5),
                        b.w * (0.7 + 0.6 * draw.unit()),
                        b.h,
                    )
                }
            })
            .collect();
        // a degenerate frame in every third case
        if n > 2 && case % 3 == 0 {
            gt[n / 2] = BBox::new(0.0, 0.0, 0.0, 0.0);
            gt_ir[n / 2] = BBox::new(0.0, 0.0, 0.0, 0.0);
        }
        let brute = metrics_brute(&pred, &gt, Some(&gt_ir));
        let report = match compute_metrics(&pred, &gt, Some(&gt_ir), Protocol::Rgbt234) {
            Ok(r) => r,
            Err(e) => return Check::new("metrics", false, format!("case {case}: {e}")),
        };
        let pairs = [
            (report.pr, brute.pr),
            (report.sr, brute.sr),
            (report.npr, brute.npr),
            (report.pr5, brute.pr5),
            (
                report.mpr.unwrap_or(f64::NAN),
                brute.mpr.unwrap_or(f64::NAN),
            ),
            (
                report.msr.unwrap_or(f64::NAN),
                brute.msr.unwrap_or(f64::NAN),
            ),
        ];
        for (a, b) in pairs {
            let err = (a - b).abs();
            if err.is_nan() || err > METRIC_TOLERANCE {
                return Check::new(
                    "metrics",
                    false,
                    format!("case {case}: {a} vs brute force {b}"),
                );
            }
            worst = worst.max(err);
        }
    }
    let gt: Vec<BBox> = (0..25).map(|_| random_box(&mut draw)).collect();
    for protocol in Protocol::ALL {
        let r = match compute_metrics(&gt, &gt, Some(&gt), protocol) {
            Ok(r) => r,
            Err(e) => return Check::new("metrics", false, format!("perfect tracker: {e}")),
        };
        let all = [
            r.pr,
            r.sr,
            r.npr,
            r.pr5,
            r.mpr.unwrap_or(0.0),
            r.msr.unwrap_or(0.0),
        ];
        if all.iter().any(|&v| v != 1.0) {
            return Check::new(
                "metrics",
                false,
                format!("perfect tracker under {protocol}: {all:?}"),
            );
        }
    }
    Check::new(
        "metrics",
        true,
        format!("{METRIC_CASES} cases, max error {worst:.1e}; perfect tracker = 1"),
    )
}

/// Loss recomposition on random cases, the perfect prediction and hand
/// GIoU values.
pub fn loss_oracle(seed: u64) -> Check {
    const GRID: usize = 16;
    const CROP: f64 = 256.0;
    let mut draw = Draw::new(seed);
    for case in 0..LOSS_CASES {
        let gt = BBox::new(
            16.0 + 160.0 * draw.unit(),
            16.0 + 160.0 * draw.unit(),
            8.0 + 60.0 * draw.unit(),
            8.0 + 60.0 * draw.unit(),
        );
        let cls = Tensor::from_fn([1, 1, GRID, GRID], |_| (0.01 + 0.98 * draw.unit()) as f32);
        let reg = Tensor::from_fn([1, 4, GRID, GRID], |_| draw.unit() as f32);
        let terms = gaussian_heatmap(&gt, GRID, CROP)
            .and_then(|heat| total_loss(&ScoreMap::new(cls, reg)?, &gt, &heat, CROP));
        match terms {
            Ok(t) => {
                let residual = t.total - (t.cls + LAMBDA_L1 * t.l1 + LAMBDA_GIOU * t.giou);
                if residual != 0.0 {
                    return Check::new(
                        "loss",
                        false,
                        format!("case {case}: residual {residual:e}"),
                    );
                }
            }
            Err(e) => return Check::new("loss", false, format!("case {case}: {e}")),
        }
    }
    // one-cell target: the heat map is a single positive, so a prediction
    // equal to it is loss-free
    let gt = BBox::new(100.0, 60.0, 16.0, 16.0);
    let perfect = gaussian_heatmap(&gt, GRID, CROP).and_then(|heat| {
        let ((row, col), target) = encode_box(&gt, GRID, CROP)?;
        let mut reg = Tensor::zeros([1, 4, GRID, GRID]);
        for (c, v) in target.iter().enumerate() {
            reg.set(0, c, row, col, *v as f32);
        }
        total_loss(&ScoreMap::new(heat.clone(), reg)?, &gt, &heat, CROP)
    });
    match perfect {
        Ok(t) if t.total <= 1e-6 => {}
        Ok(t) => {
            return Check::new(
                "loss",
                false,
                format!("perfect prediction loss {}", t.total),
            )
        }
        Err(e) => return Check::new("loss", false, format!("perfect prediction: {e}")),
    }
    let a = BBox::new(0.0, 0.0, 1.0, 1.0);
    let identical = a.giou(&a);
    let disjoint = a.giou(&BBox::new(2.0, 2.0, 1.0, 1.0));
    if (identical - 1.0).abs() > 1e-12 || (disjoint + 7.0 / 9.0).abs() > 1e-12 {
        return Check::new(
            "loss",
            false,
            format!("GIoU hand cases: {identical}, {disjoint}"),
        );
    }
    Check::new(
        "loss",
        true,
        format!("{LOSS_CASES} recompositions exact; perfect prediction ≤ 1e-6; GIoU hand cases"),
    )
}

/// Every suite, in a fixed order.
pub fn run_all(seed: u64) -> Vec<Check> {
    vec![
        attention_oracle(seed),
        conv_oracle(seed + 1),
        xcorr_oracle(seed + 2),
        unfold_roundtrip(seed + 3),
        metric_oracle(seed + 4),
        loss_oracle(seed + 5),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_suite_passes() {
        for check in run_all(0) {
            assert!(check.passed, "{}: {}", check.name, check.detail);
        }
    }
}
