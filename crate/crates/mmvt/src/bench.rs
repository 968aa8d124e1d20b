//! Separable vs softmax attention timings over growing token counts.
//!
//! Both layers share one width `d` and run on a single group of `k` tokens.
//! Each repetition times enough back-to-back calls to last a few
//! milliseconds; the reported figure is the median per-call time.

use std::fmt::Write as _;
use std::time::Instant;

use mmvt_core::attention::{Linear, SeparableAttention, SoftmaxAttention};
use mmvt_core::oracle::{separable_attention_loop, softmax_attention_loop};
use mmvt_core::params::Init;
use mmvt_core::weights::RandomSource;
use mmvt_core::{Tensor, TokenBlock};

pub const CSV_HEADER: &str = "k,separable_ms,quadratic_ms";

/// Tokens used by the correctness gate.
const GATE_TOKENS: usize = 64;
const GATE_TOLERANCE: f32 = 1e-5;
/// Minimum wall time of one repetition.
const REP_TARGET_MS: f64 = 5.0;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("bench needs at least one k, all positive and strictly ascending, got {0:?}")]
    BadTokens(Vec<usize>),
    #[error("bench needs d ≥ 1 and at least one repetition")]
    BadShape,
    #[error(
        "correctness gate: {path} differs from its oracle by {err:e} (limit {GATE_TOLERANCE:e})"
    )]
    Gate { path: &'static str, err: f32 },
    #[error(transparent)]
    Model(#[from] mmvt_core::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub k: usize,
    pub separable_ms: f64,
    pub quadratic_ms: f64,
}

pub struct Layers {
    separable: SeparableAttention,
    softmax: SoftmaxAttention,
    sep_tensors: [Tensor; 4],
    soft_tensors: [Tensor; 8],
}

impl Layers {
    /// Both layers with fan-in scaled random weights from `seed`.
    pub fn new(dim: usize, seed: u64) -> Result<Self, BenchError> {
        let mut src = RandomSource::new(seed);
        let mut lin = |out: usize| {
            [
                src.fill([out, dim, 1, 1], Init::FanIn(dim)),
                src.fill([out, 1, 1, 1], Init::FanIn(dim)),
            ]
        };
        let [wq, bq] = lin(1 + 2 * dim);
        let [wo, bo] = lin(dim);
        let soft: Vec<Tensor> = (0..4).flat_map(|_| lin(dim)).collect();
        let linear = |w: &Tensor, b: &Tensor| Linear::from_tensors(w, Some(b));
        let separable = SeparableAttention::from_parts(linear(&wq, &bq)?, linear(&wo, &bo)?)?;
        let softmax = SoftmaxAttention::from_parts(
            linear(&soft[0], &soft[1])?,
            linear(&soft[2], &soft[3])?,
            linear(&soft[4], &soft[5])?,
            linear(&soft[6], &soft[7])?,
        )?;
        Ok(Self {
            separable,
            softmax,
            sep_tensors: [wq, bq, wo, bo],
            soft_tensors: soft.try_into().expect("eight tensors"),
        })
    }

    /// Runs both layers against their loop oracles on a small input.
    pub fn gate(&self, seed: u64) -> Result<(), BenchError> {
        let x = tokens(GATE_TOKENS, self.separable.dim(), seed);
        let [wq, bq, wo, bo] = &self.sep_tensors;
        let err = self
            .separable
            .forward(&x)?
            .max_abs_diff(&separable_attention_loop(&x, wq, bq, wo, bo))?;
        if err.is_nan() || err > GATE_TOLERANCE {
            return Err(BenchError::Gate {
                path: "separable attention",
                err,
            });
        }
        let s = &self.soft_tensors;
        let proj = [
            (&s[0], &s[1]),
            (&s[2], &s[3]),
            (&s[4], &s[5]),
            (&s[6], &s[7]),
        ];
        let err = self
            .softmax
            .forward(&x)?
            .max_abs_diff(&softmax_attention_loop(&x, proj))?;
        if err.is_nan() || err > GATE_TOLERANCE {
            return Err(BenchError::Gate {
                path: "softmax attention",
                err,
            });
        }
        Ok(())
    }
}

/// One group of `k` tokens with entries uniform in `[-1, 1)`.
pub fn tokens(k: usize, dim: usize, seed: u64) -> TokenBlock {
    // fan-in 1 gives the unit bound
    let t = RandomSource::new(seed).fill([k, dim, 1, 1], Init::FanIn(1));
    TokenBlock::new(1, k, dim, t.data().to_vec()).expect("sized above")
}

/// Median per-call milliseconds of `f` over `reps` repetitions.
fn time_ms(
    reps: usize,
    mut f: impl FnMut() -> Result<TokenBlock, mmvt_core::Error>,
) -> Result<f64, BenchError> {
    // warm-up call doubles as the calibration for the inner count
    let start = Instant::now();
    std::hint::black_box(f()?);
    let once = start.elapsed().as_secs_f64() * 1e3;
    let inner = ((REP_TARGET_MS / once.max(1e-6)).ceil() as usize).clamp(1, 10_000);
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        for _ in 0..inner {
            std::hint::black_box(f()?);
        }
        samples.push(start.elapsed().as_secs_f64() * 1e3 / inner as f64);
    }
    samples.sort_by(f64::total_cmp);
    let mid = samples.len() / 2;
    Ok(if samples.len() % 2 == 1 {
        samples[mid]
    } else {
        0.5 * (samples[mid - 1] + samples[mid])
    })
}

/// Gates both layers, then times them at each `k`.
pub fn bench_attention(
    ks: &[usize],
    dim: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<BenchRow>, BenchError> {
    if ks.is_empty() || ks[0] == 0 || ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(BenchError::BadTokens(ks.to_vec()));
    }
    if dim == 0 || reps == 0 {
        return Err(BenchError::BadShape);
    }
    let layers = Layers::new(dim, seed)?;
    layers.gate(seed ^ 0x5eed)?;
    ks.iter()
        .map(|&k| {
            let x = tokens(k, dim, seed.wrapping_add(k as u64));
            Ok(BenchRow {
                k,
                separable_ms: time_ms(reps, || layers.separable.forward(&x))?,
                quadratic_ms: time_ms(reps, || layers.softmax.forward(&x))?,
            })
        })
        .collect()
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut text = format!("{CSV_HEADER}\n");
    for r in rows {
        writeln!(text, "{},{:.6},{:.6}", r.k, r.separable_ms, r.quadratic_ms)
            .expect("string write");
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_passes_for_built_layers() {
        for d in [1, 4, 16, 32] {
            Layers::new(d, 3).unwrap().gate(9).unwrap();
        }
    }

    #[test]
    fn rejects_unsorted_or_empty_k() {
        assert!(matches!(
            bench_attention(&[], 8, 1, 0),
            Err(BenchError::BadTokens(_))
        ));
        assert!(matches!(
            bench_attention(&[64, 32], 8, 1, 0),
            Err(BenchError::BadTokens(_))
        ));
        assert!(matches!(
            bench_attention(&[64], 0, 1, 0),
            Err(BenchError::BadShape)
        ));
    }

    #[test]
    fn small_run_produces_csv() {
        let rows = bench_attention(&[16, 32], 4, 3, 1).unwrap();
        let csv = to_csv(&rows);
        assert!(csv.starts_with("k,separable_ms,quadratic_ms\n16,"));
        assert!(rows
            .iter()
            .all(|r| r.separable_ms > 0.0 && r.quadratic_ms > 0.0));
    }
}
