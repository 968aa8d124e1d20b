//! Metric reports as JSON and the curves as CSV.
//!
//! JSON shape: `{"protocol", "aggregate": {...}, "sequences": {name: {...}}}`
//! where each entry has `pr, sr, npr, mpr, msr, pr5, frames`; `mpr`/`msr` are
//! `null` when the protocol has no thermal ground truth.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use mmvt_core::metrics::{
    norm_threshold, precision_threshold, success_threshold, MetricReport, Protocol,
};
use serde_json::{json, Value};

use crate::IoError;

pub fn report_json(report: &MetricReport) -> Value {
    json!({
        "pr": report.pr,
        "sr": report.sr,
        "npr": report.npr,
        "mpr": report.mpr,
        "msr": report.msr,
        "pr5": report.pr5,
        "frames": report.frames,
    })
}

pub fn evaluation_json(
    protocol: Protocol,
    aggregate: &MetricReport,
    sequences: &[(String, MetricReport)],
) -> Value {
    let per: BTreeMap<&str, Value> = sequences
        .iter()
        .map(|(n, r)| (n.as_str(), report_json(r)))
        .collect();
    json!({
        "protocol": protocol.name(),
        "aggregate": report_json(aggregate),
        "sequences": per,
    })
}

fn curve_csv(header: &str, curve: &[f64], threshold: impl Fn(usize) -> f64) -> String {
    let mut text = format!("threshold,{header}\n");
    for (j, v) in curve.iter().enumerate() {
        writeln!(text, "{},{v:.6}", threshold(j)).expect("string write");
    }
    text
}

/// Writes `metrics.json` plus `success.csv`, `precision.csv` and
/// `norm_precision.csv` (and the max-fusion curves when present) into `dir`.
pub fn write_report(
    dir: &Path,
    protocol: Protocol,
    aggregate: &MetricReport,
    sequences: &[(String, MetricReport)],
) -> Result<(), IoError> {
    fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| IoError::io(path, e))
    };
    let json = evaluation_json(protocol, aggregate, sequences);
    write(
        "metrics.json",
        serde_json::to_string_pretty(&json).expect("json values serialise") + "\n",
    )?;
    let c = &aggregate.curves;
    write(
        "success.csv",
        curve_csv("success", &c.success, success_threshold),
    )?;
    write(
        "precision.csv",
        curve_csv("precision", &c.precision, precision_threshold),
    )?;
    write(
        "norm_precision.csv",
        curve_csv("norm_precision", &c.norm_precision, norm_threshold),
    )?;
    if let Some(curve) = &c.max_success {
        write(
            "max_success.csv",
            curve_csv("max_success", curve, success_threshold),
        )?;
    }
    if let Some(curve) = &c.max_precision {
        write(
            "max_precision.csv",
            curve_csv("max_precision", curve, precision_threshold),
        )?;
    }
    Ok(())
}

/// One line per report for the terminal.
pub fn summary_line(name: &str, r: &MetricReport) -> String {
    let mut line = format!(
        "{name}: PR {:.4} SR {:.4} NPR {:.4} PR5 {:.4}",
        r.pr, r.sr, r.npr, r.pr5
    );
    if let (Some(mpr), Some(msr)) = (r.mpr, r.msr) {
        write!(line, " MPR {mpr:.4} MSR {msr:.4}").expect("string write");
    }
    write!(line, " ({} frames)", r.frames).expect("string write");
    line
}
