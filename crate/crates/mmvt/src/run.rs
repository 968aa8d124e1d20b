//! Tracking whole sequences.

use mmvt_core::tracker::{TrackResult, TrackerState};
use mmvt_core::{BBox, Model, Tensor};
use rayon::prelude::*;

use crate::dataset::SequenceRecord;
use crate::{frames, IoError};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("sequence {sequence}, frame {frame}: {source}")]
    Track {
        sequence: String,
        frame: usize,
        #[source]
        source: mmvt_core::Error,
    },
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRun {
    pub name: String,
    /// One record per frame; frame 0 is the initial box with confidence 1.
    pub records: Vec<TrackResult>,
}

impl SequenceRun {
    pub fn boxes(&self) -> Vec<BBox> {
        self.records.iter().map(|r| r.bbox).collect()
    }
}

/// Tracks `len` frames produced by `frame(i)`, initialised on `init`.
/// The thermal frame is dropped when the model does not use it.
pub fn track_frames<F>(
    model: &Model,
    name: &str,
    len: usize,
    init: BBox,
    mut frame: F,
) -> Result<SequenceRun, RunError>
where
    F: FnMut(usize) -> Result<(Tensor, Tensor), RunError>,
{
    let thermal = model.config().variant.uses_thermal();
    let fail = |frame: usize| {
        move |source| RunError::Track {
            sequence: name.to_string(),
            frame,
            source,
        }
    };
    let (rgb, ir) = frame(0)?;
    let ir = thermal.then_some(ir);
    let mut state = TrackerState::init(model, &rgb, ir.as_ref(), init).map_err(fail(0))?;
    let mut records = Vec::with_capacity(len);
    records.push(TrackResult {
        frame: 0,
        bbox: init,
        confidence: 1.0,
        degenerate: false,
    });
    for i in 1..len {
        let (rgb, ir) = frame(i)?;
        let ir = thermal.then_some(ir);
        records.push(state.track(model, &rgb, ir.as_ref()).map_err(fail(i))?);
    }
    Ok(SequenceRun {
        name: name.to_string(),
        records,
    })
}

/// Tracks a sequence from disk, starting from its first visible box.
pub fn track_sequence(model: &Model, seq: &SequenceRecord) -> Result<SequenceRun, RunError> {
    let thermal = model.config().variant.uses_thermal();
    track_frames(model, &seq.name, seq.len(), seq.gt_rgb[0], |i| {
        let rgb = frames::load(&seq.rgb_frames[i])?;
        // skip decoding thermal frames an RGB-only model never looks at
        let ir = if thermal {
            frames::load(&seq.ir_frames[i])?
        } else {
            Tensor::zeros([1, 3, 1, 1])
        };
        Ok((rgb, ir))
    })
}

/// Tracks every sequence on a pool of `threads` workers (0 = one per core).
/// Output order follows `sequences`; results do not depend on `threads`.
pub fn track_all(
    model: &Model,
    sequences: &[SequenceRecord],
    threads: usize,
) -> Result<Vec<SequenceRun>, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()?;
    pool.install(|| {
        sequences
            .par_iter()
            .map(|s| track_sequence(model, s))
            .collect()
    })
}
