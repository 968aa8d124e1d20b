//! Sequence folders.
//!
//! Every layout (`lasher`, `rgbt234`, `gtot`) uses the same folder shape:
//!
//! ```text
//! <sequence>/
//!   visible/      RGB frames (png/jpg/bmp), frame order = sorted file name
//!   infrared/     thermal frames, same count
//!   visible.txt   one "x,y,w,h" line per frame (commas or whitespace)
//!   infrared.txt  thermal ground truth; required for rgbt234, optional otherwise
//!   absent.txt    optional, one 0/1 flag per frame; flagged frames are not scored
//! ```
//!
//! A dataset root is either one such folder or a folder of them.

use std::fs;
use std::path::{Path, PathBuf};

use mmvt_core::metrics::Protocol;
use mmvt_core::BBox;

use crate::IoError;

/// Dataset layouts are named after the benchmark protocols.
pub type Layout = Protocol;

const IMAGE_EXTENSIONS: [&str; 4] = ["png", "jpg", "jpeg", "bmp"];

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRecord {
    pub name: String,
    pub root: PathBuf,
    pub rgb_frames: Vec<PathBuf>,
    pub ir_frames: Vec<PathBuf>,
    pub gt_rgb: Vec<BBox>,
    pub gt_ir: Option<Vec<BBox>>,
    pub absent: Option<Vec<bool>>,
}

impl SequenceRecord {
    pub fn len(&self) -> usize {
        self.rgb_frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rgb_frames.is_empty()
    }

    /// Ground truth as scored: absent frames become empty boxes, which the
    /// metrics skip.
    pub fn scored_gt(&self) -> (Vec<BBox>, Option<Vec<BBox>>) {
        let mask = |gt: &[BBox]| -> Vec<BBox> {
            gt.iter()
                .enumerate()
                .map(|(i, b)| match &self.absent {
                    Some(a) if a[i] => BBox::new(0.0, 0.0, 0.0, 0.0),
                    _ => *b,
                })
                .collect()
        };
        (mask(&self.gt_rgb), self.gt_ir.as_deref().map(mask))
    }
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>, IoError> {
    let entries = fs::read_dir(dir).map_err(|e| IoError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| IoError::io(dir, e))?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if is_image {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(IoError::invalid(dir, "no image files"));
    }
    Ok(files)
}

/// Parses one "x,y,w,h" line (commas, tabs or spaces).
pub fn parse_box(line: &str) -> Option<BBox> {
    let vals: Vec<f64> = line
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>())
        .collect::<Result<_, _>>()
        .ok()?;
    match vals[..] {
        [x, y, w, h] if vals.iter().all(|v| v.is_finite()) => Some(BBox::new(x, y, w, h)),
        _ => None,
    }
}

fn non_empty_lines(path: &Path) -> Result<Vec<(usize, String)>, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .collect())
}

/// Reads a box-per-line file, naming the first malformed line.
pub fn read_boxes(path: &Path) -> Result<Vec<BBox>, IoError> {
    non_empty_lines(path)?
        .into_iter()
        .map(|(n, line)| {
            parse_box(&line).ok_or_else(|| {
                IoError::invalid(
                    path,
                    format!("line {n}: expected \"x,y,w,h\", got {line:?}"),
                )
            })
        })
        .collect()
}

fn read_flags(path: &Path) -> Result<Vec<bool>, IoError> {
    non_empty_lines(path)?
        .into_iter()
        .map(|(n, line)| match line.as_str() {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(IoError::invalid(
                path,
                format!("line {n}: expected 0 or 1, got {line:?}"),
            )),
        })
        .collect()
}

fn check_count(path: &Path, what: &str, found: usize, frames: usize) -> Result<(), IoError> {
    if found != frames {
        return Err(IoError::invalid(
            path,
            format!("{found} {what} for {frames} frames (frame-count mismatch)"),
        ));
    }
    Ok(())
}

pub fn load_sequence(root: &Path, layout: Layout) -> Result<SequenceRecord, IoError> {
    let name = root
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| IoError::invalid(root, "sequence folder has no usable name"))?
        .to_string();
    let rgb_frames = list_images(&root.join("visible"))?;
    let ir_dir = root.join("infrared");
    let ir_frames = list_images(&ir_dir)?;
    let frames = rgb_frames.len();
    check_count(&ir_dir, "thermal frames", ir_frames.len(), frames)?;

    let vis = root.join("visible.txt");
    let gt_rgb = read_boxes(&vis)?;
    check_count(&vis, "ground-truth lines", gt_rgb.len(), frames)?;
    if !gt_rgb[0].is_valid() {
        return Err(IoError::invalid(
            &vis,
            "line 1: the first box must have positive width and height",
        ));
    }

    let inf = root.join("infrared.txt");
    let gt_ir = if inf.exists() {
        let gt = read_boxes(&inf)?;
        check_count(&inf, "ground-truth lines", gt.len(), frames)?;
        Some(gt)
    } else if layout.requires_ir_gt() {
        return Err(IoError::invalid(
            &inf,
            format!("layout {layout} requires thermal ground truth"),
        ));
    } else {
        None
    };

    let abs = root.join("absent.txt");
    let absent = if abs.exists() {
        let flags = read_flags(&abs)?;
        check_count(&abs, "absent flags", flags.len(), frames)?;
        Some(flags)
    } else {
        None
    };

    Ok(SequenceRecord {
        name,
        root: root.to_path_buf(),
        rgb_frames,
        ir_frames,
        gt_rgb,
        gt_ir,
        absent,
    })
}

/// All sequences under `root`, sorted by name.
pub fn discover(root: &Path, layout: Layout) -> Result<Vec<SequenceRecord>, IoError> {
    if !root.is_dir() {
        return Err(IoError::invalid(root, "dataset folder does not exist"));
    }
    if root.join("visible").is_dir() {
        return Ok(vec![load_sequence(root, layout)?]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| IoError::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("visible").is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(IoError::invalid(
            root,
            "no sequence folders (expected visible/ and infrared/ inside)",
        ));
    }
    dirs.iter().map(|d| load_sequence(d, layout)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(dir: &Path, frames: usize, vis_lines: usize, ir_lines: Option<usize>) -> PathBuf {
        let root = dir.join("seq");
        for sub in ["visible", "infrared"] {
            fs::create_dir_all(root.join(sub)).unwrap();
            for i in 0..frames {
                // content is never decoded here
                fs::write(root.join(sub).join(format!("{i:04}.png")), b"").unwrap();
            }
        }
        let lines = |n: usize| {
            (0..n)
                .map(|i| format!("{},{},10,12\n", i, 2 * i))
                .collect::<String>()
        };
        fs::write(root.join("visible.txt"), lines(vis_lines)).unwrap();
        if let Some(n) = ir_lines {
            fs::write(root.join("infrared.txt"), lines(n)).unwrap();
        }
        root
    }

    #[test]
    fn minimal_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let root = fixture(dir.path(), 3, 3, None);
        let rec = load_sequence(&root, Layout::Gtot).unwrap();
        assert_eq!(
            (rec.len(), rec.gt_rgb.len(), rec.name.as_str()),
            (3, 3, "seq")
        );
        assert_eq!(rec.gt_rgb[2], BBox::new(2.0, 4.0, 10.0, 12.0));
        assert!(rec.gt_ir.is_none());
        assert_eq!(
            discover(dir.path(), Layout::Gtot).unwrap(),
            vec![rec.clone()]
        );
        assert_eq!(discover(&root, Layout::Gtot).unwrap(), vec![rec]);
    }

    #[test]
    fn short_ground_truth_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let root = fixture(dir.path(), 3, 2, None);
        let err = load_sequence(&root, Layout::Lasher)
            .unwrap_err()
            .to_string();
        assert!(
            err.contains("visible.txt") && err.contains("frame-count"),
            "{err}"
        );
    }

    #[test]
    fn lasher_fixture_with_both_modalities() {
        let dir = tempfile::tempdir().unwrap();
        let root = fixture(dir.path(), 4, 4, Some(4));
        let rec = load_sequence(&root, Layout::Lasher).unwrap();
        assert_eq!(rec.gt_ir.as_ref().map(Vec::len), Some(rec.gt_rgb.len()));
    }

    #[test]
    fn rgbt234_requires_thermal_ground_truth() {
        let dir = tempfile::tempdir().unwrap();
        let root = fixture(dir.path(), 2, 2, None);
        let err = load_sequence(&root, Layout::Rgbt234)
            .unwrap_err()
            .to_string();
        assert!(err.contains("infrared.txt"), "{err}");
    }

    #[test]
    fn malformed_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let root = fixture(dir.path(), 2, 2, None);
        fs::write(root.join("visible.txt"), "1,2,3,4\n1,2,x,4\n").unwrap();
        let err = load_sequence(&root, Layout::Lasher)
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn absent_frames_are_masked() {
        let dir = tempfile::tempdir().unwrap();
        let root = fixture(dir.path(), 3, 3, Some(3));
        fs::write(root.join("absent.txt"), "0\n1\n0\n").unwrap();
        let rec = load_sequence(&root, Layout::Rgbt234).unwrap();
        let (rgb, ir) = rec.scored_gt();
        assert!(!rgb[1].is_valid() && !ir.unwrap()[1].is_valid() && rgb[2].is_valid());
    }

    #[test]
    fn box_parsing() {
        assert_eq!(parse_box("1 2\t3,4"), Some(BBox::new(1.0, 2.0, 3.0, 4.0)));
        assert_eq!(parse_box("1,2,3"), None);
        assert_eq!(parse_box("1,2,3,nan"), None);
    }
}
