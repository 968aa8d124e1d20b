//! The `mmvt` binary end to end on synthetic fixtures.
//!
//! The golden result file is regenerated with `MMVT_BLESS=1 cargo test -p
//! mmvt --test cli`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mmvt(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmvt"))
        .args(args.iter().map(|a| a.as_ref()))
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path, seed: u64, frames: usize) {
    let (seed, frames) = (seed.to_string(), frames.to_string());
    ok(mmvt(&[
        &"synth",
        &"--out",
        &dir,
        &"--seed",
        &seed,
        &"--frames",
        &frames,
    ]));
}

fn init(path: &Path, kind: &str, variant: &str) {
    ok(mmvt(&[
        &"init",
        &"--out",
        &path,
        &"--kind",
        &kind,
        &"--seed",
        &"0",
        &"--variant",
        &variant,
    ]));
}

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

fn tree_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn track_ten_frames_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let (data, w, out) = (
        dir.path().join("data"),
        dir.path().join("w.mmvt"),
        dir.path().join("out"),
    );
    synth(&data.join("synth7"), 7, 10);
    init(&w, "random", "full");
    ok(mmvt(&[
        &"track",
        &"--weights",
        &w,
        &"--dataset",
        &data,
        &"--out",
        &out,
        &"--threads",
        &"1",
    ]));
    let text = fs::read_to_string(out.join("synth7.txt")).unwrap();
    assert_eq!(text.lines().count(), 10);
    assert!(
        text.starts_with("96.0000,104.0000,32.0000,32.0000\n"),
        "frame 0 is the initial box"
    );
    let path = golden("synth7_seed0_full.txt");
    if std::env::var_os("MMVT_BLESS").is_some() {
        fs::write(&path, &text).unwrap();
    }
    assert_eq!(text, fs::read_to_string(&path).unwrap());
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let (data, w) = (dir.path().join("data"), dir.path().join("w.mmvt"));
    synth(&data.join("a"), 7, 4);
    synth(&data.join("b"), 8, 4);
    init(&w, "random", "full");
    let run = |threads: &str, out: &str| {
        let out = dir.path().join(out);
        ok(mmvt(&[
            &"track",
            &"--weights",
            &w,
            &"--dataset",
            &data,
            &"--out",
            &out,
            &"--threads",
            &threads,
        ]));
        tree_bytes(&out)
    };
    let single = run("1", "t1");
    assert_eq!(single.len(), 2);
    assert_eq!(single, run("2", "t2"));
}

#[test]
fn base_rgb_never_reads_thermal_frames() {
    let dir = tempfile::tempdir().unwrap();
    let (seq, out) = (dir.path().join("seq"), dir.path().join("out"));
    synth(&seq, 5, 3);
    // unreadable thermal images: only a model that skips them can run
    for e in fs::read_dir(seq.join("infrared")).unwrap() {
        fs::write(e.unwrap().path(), b"not a png").unwrap();
    }
    let (wb, wf) = (dir.path().join("b.mmvt"), dir.path().join("f.mmvt"));
    init(&wb, "passthrough", "base_rgb");
    init(&wf, "passthrough", "full");
    ok(mmvt(&[
        &"track",
        &"--weights",
        &wb,
        &"--variant",
        &"base_rgb",
        &"--dataset",
        &seq,
        &"--out",
        &out,
    ]));
    assert_eq!(
        fs::read_to_string(out.join("seq.txt"))
            .unwrap()
            .lines()
            .count(),
        3
    );
    let failed = mmvt(&[
        &"track",
        &"--weights",
        &wf,
        &"--dataset",
        &seq,
        &"--out",
        &out,
    ]);
    assert_eq!(failed.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&failed.stderr).contains("infrared"));
}

#[test]
fn missing_weights_exit_two_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent-weights.mmvt");
    let out = mmvt(&[
        &"track",
        &"--weights",
        &missing,
        &"--dataset",
        &dir.path(),
        &"--out",
        &dir.path(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent-weights.mmvt"));
}

#[test]
fn unknown_flag_or_variant_is_usage_error() {
    assert_eq!(mmvt(&[&"selfcheck", &"-s", &"1"]).status.code(), Some(2));
    assert_eq!(
        mmvt(&[&"init", &"--out", &"x", &"--variant", &"tiny"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn eval_perfect_results_score_one() {
    let dir = tempfile::tempdir().unwrap();
    let (seq, res, rep) = (
        dir.path().join("seq"),
        dir.path().join("res"),
        dir.path().join("rep"),
    );
    synth(&seq, 1, 6);
    fs::create_dir_all(&res).unwrap();
    fs::copy(seq.join("visible.txt"), res.join("seq.txt")).unwrap();
    ok(mmvt(&[
        &"eval",
        &"--results",
        &res,
        &"--dataset",
        &seq,
        &"--layout",
        &"rgbt234",
        &"--out",
        &rep,
    ]));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(rep.join("metrics.json")).unwrap()).unwrap();
    for key in ["pr", "sr", "npr", "mpr", "msr", "pr5"] {
        assert_eq!(json["aggregate"][key], 1.0, "{key}");
        assert_eq!(json["sequences"]["seq"][key], 1.0, "{key}");
    }
    assert_eq!(json["aggregate"]["frames"], 6);
}

#[test]
fn eval_hand_computed_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let (seq, res, rep) = (
        dir.path().join("hand"),
        dir.path().join("res"),
        dir.path().join("rep"),
    );
    synth(&seq, 1, 2);
    fs::write(seq.join("visible.txt"), "0,0,10,10\n0,0,10,10\n").unwrap();
    fs::remove_file(seq.join("infrared.txt")).unwrap();
    fs::create_dir_all(&res).unwrap();
    // IoU 1 and 0; center errors 0 and 30 px (3 box widths)
    fs::write(res.join("hand.txt"), "0,0,10,10\n30,0,10,10\n").unwrap();
    ok(mmvt(&[
        &"eval",
        &"--results",
        &res,
        &"--dataset",
        &seq,
        &"--out",
        &rep,
    ]));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(rep.join("metrics.json")).unwrap()).unwrap();
    let a = &json["aggregate"];
    let get = |k: &str| a[k].as_f64().unwrap();
    assert_eq!(get("pr"), 0.5);
    assert_eq!(get("pr5"), 0.5);
    assert_eq!(get("npr"), 0.5);
    // success curve: 1 at θ = 0, then 0.5 for the other 20 thresholds
    assert!(
        (get("sr") - (0.75 + 19.0 * 0.5) / 20.0).abs() < 1e-12,
        "{}",
        get("sr")
    );
    assert!(a["mpr"].is_null() && a["msr"].is_null());
    let success = fs::read_to_string(rep.join("success.csv")).unwrap();
    assert_eq!(success.lines().next(), Some("threshold,success"));
    assert_eq!(success.lines().count(), 22);
}

#[test]
fn eval_rgbt234_needs_thermal_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    synth(&seq, 1, 2);
    fs::remove_file(seq.join("infrared.txt")).unwrap();
    let out = mmvt(&[
        &"eval",
        &"--results",
        &seq,
        &"--dataset",
        &seq,
        &"--layout",
        &"rgbt234",
        &"--out",
        &dir.path(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("infrared.txt") && err.contains("rgbt234"),
        "{err}"
    );
}

#[test]
fn synth_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    synth(&dir.path().join("a"), 7, 3);
    synth(&dir.path().join("b"), 7, 3);
    assert_eq!(
        tree_bytes(&dir.path().join("a")),
        tree_bytes(&dir.path().join("b"))
    );
}

#[test]
fn inspect_reports_census_and_binding() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.mmvt");
    init(&w, "random", "full");
    let text = ok(mmvt(&[&"inspect", &"--weights", &w, &"--variant", &"full"]));
    let total: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("total"))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!((total - 3_926_000.0).abs() / 3_926_000.0 <= 0.15, "{total}");
    assert!(text.contains("fusion.transformer") && text.contains("binds as full"));
    let wrong = mmvt(&[&"inspect", &"--weights", &w, &"--variant", &"base_rgb"]);
    assert_eq!(wrong.status.code(), Some(1));
}

#[test]
fn selfcheck_passes() {
    let text = ok(mmvt(&[&"selfcheck"]));
    assert_eq!(
        text.lines().filter(|l| l.starts_with("PASS")).count(),
        6,
        "{text}"
    );
}

#[test]
fn bench_writes_csv() {
    let text = ok(mmvt(&[
        &"bench", &"--k", &"32,64", &"--dim", &"8", &"--reps", &"3",
    ]));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k,separable_ms,quadratic_ms");
    assert!(lines[1].starts_with("32,") && lines[2].starts_with("64,"));
    let unsorted = mmvt(&[&"bench", &"--k", &"64,32"]);
    assert_eq!(unsorted.status.code(), Some(1));
}
