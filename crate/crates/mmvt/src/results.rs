//! Result files: `<out>/<sequence>.txt`, one `x,y,w,h` line per frame, the
//! same format as the ground truth.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mmvt_core::tracker::TrackResult;
use mmvt_core::BBox;

use crate::dataset::read_boxes;
use crate::IoError;

pub fn result_path(dir: &Path, sequence: &str) -> PathBuf {
    dir.join(format!("{sequence}.txt"))
}

fn ensure_parent(path: &Path) -> Result<(), IoError> {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e)),
        None => Ok(()),
    }
}

/// Four decimals are below any tolerance the metrics care about and keep the
/// files byte-stable across runs.
pub fn format_boxes(boxes: &[BBox]) -> String {
    let mut text = String::new();
    for b in boxes {
        writeln!(text, "{:.4},{:.4},{:.4},{:.4}", b.x, b.y, b.w, b.h).expect("string write");
    }
    text
}

pub fn write_boxes(path: &Path, boxes: &[BBox]) -> Result<(), IoError> {
    ensure_parent(path)?;
    fs::write(path, format_boxes(boxes)).map_err(|e| IoError::io(path, e))
}

pub fn read_results(dir: &Path, sequence: &str) -> Result<Vec<BBox>, IoError> {
    read_boxes(&result_path(dir, sequence))
}

/// Per-frame records as CSV: `frame,x,y,w,h,confidence,degenerate`. Frame 0
/// is the initial box (confidence 1).
pub fn format_records(records: &[TrackResult]) -> String {
    let mut text = String::from("frame,x,y,w,h,confidence,degenerate\n");
    for r in records {
        let b = r.bbox;
        writeln!(
            text,
            "{},{:.4},{:.4},{:.4},{:.4},{:.6},{}",
            r.frame, b.x, b.y, b.w, b.h, r.confidence, r.degenerate as u8
        )
        .expect("string write");
    }
    text
}

pub fn write_records(path: &Path, records: &[TrackResult]) -> Result<(), IoError> {
    ensure_parent(path)?;
    fs::write(path, format_records(records)).map_err(|e| IoError::io(path, e))
}
