//! Synthetic sequences written in the dataset layout, so the whole
//! file-based pipeline can run without external data.

use std::fs;
use std::path::Path;

use mmvt_core::synth::SynthSequence;

use crate::results::write_boxes;
use crate::{frames, IoError};

/// Writes `seq` into `dir` (`visible/`, `infrared/` as `NNNNNN.png`,
/// `visible.txt`, `infrared.txt`). Thermal frames are grayscale. The synthetic
/// frames are quantised to 8 bits, so reading them back is exact.
pub fn write_sequence(seq: &SynthSequence, dir: &Path) -> Result<(), IoError> {
    let (vis, inf) = (dir.join("visible"), dir.join("infrared"));
    for d in [&vis, &inf] {
        fs::create_dir_all(d).map_err(|e| IoError::io(d, e))?;
    }
    for i in 0..seq.len() {
        let (rgb, ir) = seq
            .render(i)
            .map_err(|e| IoError::invalid(dir, format!("rendering frame {i}: {e}")))?;
        let name = format!("{i:06}.png");
        frames::save_rgb(&rgb, &vis.join(&name))?;
        frames::save_gray(&ir, &inf.join(&name))?;
    }
    // both modalities are pixel-aligned, so they share one ground truth
    write_boxes(&dir.join("visible.txt"), seq.ground_truth())?;
    write_boxes(&dir.join("infrared.txt"), seq.ground_truth())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{load_sequence, Layout};
    use mmvt_core::synth::SynthConfig;

    #[test]
    fn written_fixture_loads_back_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let seq = SynthSequence::new(SynthConfig::new(3, 3).with_size(80, 64)).unwrap();
        let root = dir.path().join("synth");
        write_sequence(&seq, &root).unwrap();
        let rec = load_sequence(&root, Layout::Rgbt234).unwrap();
        assert_eq!(rec.len(), 3);
        assert_eq!(rec.gt_rgb, seq.ground_truth());
        let (rgb, ir) = seq.render(2).unwrap();
        assert_eq!(frames::load(&rec.rgb_frames[2]).unwrap(), rgb);
        assert_eq!(frames::load(&rec.ir_frames[2]).unwrap(), ir);
    }
}
