//! Whole-model checks on the reference configuration.
//!
//! The golden score map is regenerated with `MMVT_BLESS=1 cargo test -p
//! mmvt-core --test model`.

use std::fmt::Write as _;
use std::path::PathBuf;

use mmvt_core::backbone::{Modalities, StreamPair};
use mmvt_core::synth::{SynthConfig, SynthSequence};
use mmvt_core::tracker::{crop_resize, crop_side};
use mmvt_core::weights::init_random;
use mmvt_core::{Model, ModelConfig, Tensor, Variant};

const GOLDEN_TOLERANCE: f64 = 1e-5;

fn model(variant: Variant, seed: u64) -> Model {
    let cfg = ModelConfig::default().with_variant(variant);
    Model::bind(&cfg, &init_random(&cfg, seed).unwrap()).unwrap()
}

/// Template and search crops around the first box of the seed-7 sequence.
fn inputs() -> Modalities {
    let seq = SynthSequence::new(SynthConfig::new(7, 2)).unwrap();
    let (rgb, ir) = seq.render(1).unwrap();
    let b = seq.ground_truth()[0];
    let (cx, cy) = b.center();
    let crop = |frame: &Tensor, factor: f64, size: usize| {
        crop_resize(frame, cx, cy, crop_side(&b, factor), size)
            .unwrap()
            .0
    };
    let pair = |frame: &Tensor| StreamPair {
        search: crop(frame, 4.0, 256),
        template: crop(frame, 2.0, 128),
    };
    Modalities {
        rgb: pair(&rgb),
        ir: Some(pair(&ir)),
    }
}

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/full_seed0_scores.txt")
}

#[test]
fn full_model_scores_match_golden() {
    let scores = model(Variant::Full, 0).forward(&inputs()).unwrap();
    let values: Vec<f32> = scores
        .cls
        .data()
        .iter()
        .chain(scores.reg.data())
        .copied()
        .collect();
    let path = golden_path();
    if std::env::var_os("MMVT_BLESS").is_some() {
        let mut text = String::new();
        for v in &values {
            writeln!(text, "{v:.9e}").unwrap();
        }
        std::fs::write(&path, text).unwrap();
    }
    let golden: Vec<f64> = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| {
            panic!(
                "{}: {e} (run with MMVT_BLESS=1 to create it)",
                path.display()
            )
        })
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(golden.len(), values.len());
    for (i, (&v, &g)) in values.iter().zip(&golden).enumerate() {
        assert!(
            (v as f64 - g).abs() <= GOLDEN_TOLERANCE,
            "value {i}: {v} vs golden {g}"
        );
    }
}

#[test]
fn cached_templates_give_the_same_scores() {
    for variant in Variant::ALL {
        let m = model(variant, 1);
        let mut x = inputs();
        if !variant.uses_thermal() {
            x.ir = None;
        }
        let full = m.forward(&x).unwrap();
        let ir_t = x.ir.as_ref().map(|p| &p.template);
        let ir_s = x.ir.as_ref().map(|p| &p.search);
        let cache = m.prepare_templates(&x.rgb.template, ir_t).unwrap();
        let cached = m.forward_cached(&cache, &x.rgb.search, ir_s).unwrap();
        assert_eq!(full, cached, "{variant}");
    }
}

#[test]
fn thermal_perturbation_reaches_rgb_only_at_layer4() {
    let m = model(Variant::Full, 2);
    let x = inputs();
    let mut y = x.clone();
    let ir = y.ir.as_mut().unwrap();
    for t in [&mut ir.search, &mut ir.template] {
        for v in t.data_mut() {
            *v = 1.0 - *v;
        }
    }
    let (a, b) = (m.forward_traced(&x).unwrap(), m.forward_traced(&y).unwrap());
    assert_eq!(a.backbone.early.rgb, b.backbone.early.rgb);
    assert_eq!(a.backbone.layer3.rgb, b.backbone.layer3.rgb);
    assert_eq!(a.backbone.layer4_in.rgb, b.backbone.layer4_in.rgb);
    assert_ne!(a.backbone.layer3.ir, b.backbone.layer3.ir);
    assert_ne!(a.backbone.layer4.rgb.search, b.backbone.layer4.rgb.search);
    assert_ne!(a.corr_rgb, b.corr_rgb);
}

#[test]
fn parameter_census() {
    let count = |v: Variant| {
        mmvt_core::model::schema(&ModelConfig::default().with_variant(v))
            .unwrap()
            .iter()
            .map(|s| s.dims.iter().product::<usize>())
            .sum::<usize>()
    };
    assert_eq!(count(Variant::Full), 3_767_183);
    assert_eq!(count(Variant::BaseRgb), 3_637_390);
    assert_eq!(count(Variant::NoFusionTransformer), 3_651_086);
    let store = init_random(&ModelConfig::default(), 0).unwrap();
    assert_eq!(store.param_count(None), 3_767_183);
    assert_eq!(store.param_count(Some("fusion.transformer")), 116_097);
}

#[test]
fn variant_thermal_contract() {
    let mut x = inputs();
    assert!(model(Variant::BaseRgb, 0).forward(&x).is_err());
    x.ir = None;
    assert!(model(Variant::Full, 0).forward(&x).is_err());
    assert!(model(Variant::BaseRgb, 0).forward(&x).is_ok());
}
