//! Tracking runs on synthetic sequences.

use mmvt_core::metrics::{compute_metrics, Protocol};
use mmvt_core::passthrough::passthrough_store;
use mmvt_core::synth::{Motion, SynthConfig, SynthSequence};
use mmvt_core::tracker::TrackerState;
use mmvt_core::weights::init_random;
use mmvt_core::{BBox, Model, ModelConfig, Variant, WeightStore};

fn track(model: &Model, seq: &SynthSequence) -> Vec<BBox> {
    let thermal = model.config().variant.uses_thermal();
    let (rgb, ir) = seq.render(0).unwrap();
    let ir = thermal.then_some(ir);
    let mut state = TrackerState::init(model, &rgb, ir.as_ref(), seq.ground_truth()[0]).unwrap();
    let mut boxes = vec![seq.ground_truth()[0]];
    for i in 1..seq.len() {
        let (rgb, ir) = seq.render(i).unwrap();
        let ir = thermal.then_some(ir);
        boxes.push(state.track(model, &rgb, ir.as_ref()).unwrap().bbox);
    }
    boxes
}

fn bind(variant: Variant, store: impl Fn(&ModelConfig) -> WeightStore) -> Model {
    let cfg = ModelConfig::default().with_variant(variant);
    Model::bind(&cfg, &store(&cfg)).unwrap()
}

#[test]
fn passthrough_weights_follow_the_target() {
    let seq = SynthSequence::new(SynthConfig::new(7, 20)).unwrap();
    let boxes = track(
        &bind(Variant::Full, |c| passthrough_store(c).unwrap()),
        &seq,
    );
    let gt = seq.ground_truth();
    let mean_iou = boxes[1..]
        .iter()
        .zip(&gt[1..])
        .map(|(b, g)| b.iou(g))
        .sum::<f64>()
        / 19.0;
    assert!(mean_iou > 0.5, "mean IoU {mean_iou}");
    let r = compute_metrics(&boxes, gt, None, Protocol::Lasher).unwrap();
    assert!(r.pr > 0.9, "PR {}", r.pr);
}

#[test]
fn static_target_stays_put() {
    let seq = SynthSequence::new(SynthConfig::new(3, 8).with_motion(Motion::Static)).unwrap();
    let boxes = track(
        &bind(Variant::BaseRgb, |c| passthrough_store(c).unwrap()),
        &seq,
    );
    for b in &boxes {
        assert!(b.center_error(&seq.ground_truth()[0]) < 8.0, "{b:?}");
    }
}

#[test]
fn random_weight_runs_are_bit_identical() {
    let seq = SynthSequence::new(SynthConfig::new(7, 5)).unwrap();
    let model = bind(Variant::Full, |c| init_random(c, 0).unwrap());
    assert_eq!(track(&model, &seq), track(&model, &seq));
}
