//! The full network: backbone → correlation neck → fusion → head.

use alloc::format;
use alloc::vec::Vec;

use crate::backbone::{Backbone, BackboneTrace, Modalities, StreamPair};
use crate::config::{ModelConfig, Variant};
use crate::error::{Error, Result};
use crate::head::{Head, ScoreMap};
use crate::neck::{CorrAdjust, FusionTransformer, WeightedAdd};
use crate::params::{Binder, ParamSource, ParamSpec, Params, SchemaRecorder};
use crate::tensor::Tensor;
use crate::weights::WeightStore;

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    backbone: Backbone,
    adjust_rgb: CorrAdjust,
    adjust_ir: Option<CorrAdjust>,
    fusion: Option<FusionTransformer>,
    gates: Option<WeightedAdd>,
    head: Head,
}

/// Template features after the shared early stages, reused for every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateCache {
    pub rgb: Tensor,
    pub ir: Option<Tensor>,
}

/// Intermediate maps of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub backbone: BackboneTrace,
    pub corr_rgb: Tensor,
    pub corr_ir: Option<Tensor>,
    pub fused: Tensor,
    pub scores: ScoreMap,
}

/// Every parameter the model for `config` binds, in construction order.
pub fn schema(config: &ModelConfig) -> Result<Vec<ParamSpec>> {
    config.validate()?;
    let mut rec = SchemaRecorder::default();
    Model::construct(config, &mut rec);
    Ok(rec.specs)
}

impl Model {
    fn construct(config: &ModelConfig, source: &mut dyn ParamSource) -> Self {
        let mut root = Params::root(source);
        let backbone = Backbone::build(&mut root.sub("backbone"), config);
        let corr = config.corr_channels();
        let mut neck = root.sub("neck");
        let adjust_rgb = CorrAdjust::build(&mut neck.sub("rgb"), corr, config.fusion_dim);
        let adjust_ir = config
            .variant
            .uses_thermal()
            .then(|| CorrAdjust::build(&mut neck.sub("ir"), corr, config.fusion_dim));
        let mut fusion_p = root.sub("fusion");
        let fusion = (config.variant == Variant::Full)
            .then(|| FusionTransformer::build(&mut fusion_p, config));
        let gates = config
            .variant
            .uses_thermal()
            .then(|| WeightedAdd::build(&mut fusion_p, config.fusion_dim));
        let head = Head::build(&mut root.sub("head"), config);
        Self {
            config: config.clone(),
            backbone,
            adjust_rgb,
            adjust_ir,
            fusion,
            gates,
            head,
        }
    }

    /// Binds to `store`. Every expected tensor must be present with the
    /// right extents and the store must hold nothing else.
    pub fn bind(config: &ModelConfig, store: &WeightStore) -> Result<Self> {
        config.validate()?;
        let mut binder = Binder::new(store);
        let model = Self::construct(config, &mut binder);
        binder.finish()?;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn backbone(&self) -> &Backbone {
        &self.backbone
    }

    fn check_thermal(&self, has_ir: bool) -> Result<()> {
        if has_ir != self.config.variant.uses_thermal() {
            return Err(Error::Input(format!(
                "variant {} {} a thermal stream",
                self.config.variant,
                if has_ir { "does not take" } else { "requires" }
            )));
        }
        Ok(())
    }

    pub fn prepare_templates(&self, rgb: &Tensor, ir: Option<&Tensor>) -> Result<TemplateCache> {
        self.check_thermal(ir.is_some())?;
        Ok(TemplateCache {
            rgb: self.backbone.early_template(rgb)?,
            ir: ir.map(|z| self.backbone.early_template(z)).transpose()?,
        })
    }

    /// Forward pass on search images against cached templates.
    pub fn forward_cached(
        &self,
        templates: &TemplateCache,
        rgb: &Tensor,
        ir: Option<&Tensor>,
    ) -> Result<ScoreMap> {
        Ok(self.forward_cached_traced(templates, rgb, ir)?.scores)
    }

    pub fn forward_cached_traced(
        &self,
        templates: &TemplateCache,
        rgb: &Tensor,
        ir: Option<&Tensor>,
    ) -> Result<ForwardTrace> {
        self.check_thermal(ir.is_some())?;
        if templates.ir.is_some() != ir.is_some() {
            return Err(Error::Input(
                "template cache and search inputs disagree on the thermal stream".into(),
            ));
        }
        let early = Modalities {
            rgb: StreamPair {
                search: self.backbone.early_search(rgb)?,
                template: templates.rgb.clone(),
            },
            ir: match (ir, &templates.ir) {
                (Some(x), Some(z)) => Some(StreamPair {
                    search: self.backbone.early_search(x)?,
                    template: z.clone(),
                }),
                _ => None,
            },
        };
        let trace = self.backbone.forward_traced_from_early(early)?;
        self.finish(trace)
    }

    /// Full forward pass on raw `[1, 3, S, S]` search and `[1, 3, S/2, S/2]`
    /// template images.
    pub fn forward(&self, images: &Modalities) -> Result<ScoreMap> {
        Ok(self.forward_traced(images)?.scores)
    }

    pub fn forward_traced(&self, images: &Modalities) -> Result<ForwardTrace> {
        self.check_thermal(images.ir.is_some())?;
        let trace = self.backbone.forward_traced(images)?;
        self.finish(trace)
    }

    fn finish(&self, backbone: BackboneTrace) -> Result<ForwardTrace> {
        let out = &backbone.layer4;
        let corr_rgb = self
            .adjust_rgb
            .forward(&out.rgb.search, &out.rgb.template)?;
        let corr_ir = match (&self.adjust_ir, &out.ir) {
            (Some(adjust), Some(p)) => Some(adjust.forward(&p.search, &p.template)?),
            _ => None,
        };
        let fused = match (&corr_ir, &self.gates) {
            (Some(ir), Some(gates)) => match &self.fusion {
                Some(f) => {
                    let (a, b) = f.forward(&corr_rgb, ir)?;
                    gates.forward(&a, &b)?
                }
                None => gates.forward(&corr_rgb, ir)?,
            },
            _ => corr_rgb.clone(),
        };
        let scores = self.head.forward(&fused)?;
        Ok(ForwardTrace {
            backbone,
            corr_rgb,
            corr_ir,
            fused,
            scores,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::init_random;

    fn count(cfg: &ModelConfig) -> usize {
        schema(cfg)
            .unwrap()
            .iter()
            .map(|s| s.dims.iter().product::<usize>())
            .sum()
    }

    #[test]
    fn variant_census_ordering() {
        let base = ModelConfig::default();
        let full = count(&base);
        let rgb = count(&base.clone().with_variant(Variant::BaseRgb));
        let nofuse = count(&base.clone().with_variant(Variant::NoFusionTransformer));
        assert!(rgb < nofuse && nofuse < full, "{rgb} {nofuse} {full}");
        assert!(
            (full as f64 - 3_926_000.0).abs() / 3_926_000.0 <= 0.15,
            "{full}"
        );
        assert!(
            (rgb as f64 - 3_767_000.0).abs() / 3_767_000.0 <= 0.15,
            "{rgb}"
        );
        let delta = (full - nofuse) as f64;
        assert!((70_000.0..=210_000.0).contains(&delta), "{delta}");
    }

    #[test]
    fn schema_names_are_unique_and_bind() {
        let cfg = ModelConfig::default();
        let specs = schema(&cfg).unwrap();
        let mut names: Vec<_> = specs.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), specs.len());
        let store = init_random(&cfg, 3).unwrap();
        assert!(Model::bind(&cfg, &store).is_ok());
    }

    #[test]
    fn binding_reports_missing_and_extra() {
        let cfg = ModelConfig::default();
        let mut store = init_random(&cfg, 1).unwrap();
        let other = init_random(&cfg.clone().with_variant(Variant::BaseRgb), 1).unwrap();
        store.insert("stray.weight", Tensor::zeros([1, 1, 1, 1]));
        match Model::bind(&cfg.clone().with_variant(Variant::BaseRgb), &store) {
            Err(Error::Binding {
                extra, mismatched, ..
            }) => {
                assert!(extra.contains(&"stray.weight".into()));
                assert!(extra.iter().any(|n| n.starts_with("neck.ir.")));
                // Layer_4 per-modality widths differ between the variants
                assert!(mismatched
                    .iter()
                    .any(|n| n.starts_with("backbone.layer4.rgb.local.pw.weight")));
            }
            other => panic!("{other:?}"),
        }
        assert!(Model::bind(&cfg, &other).is_err());
    }
}
