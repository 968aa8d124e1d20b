use alloc::format;
use alloc::string::ToString;

use crate::error::{Error, Result};

/// Which ablation of the tracker to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// RGB and thermal streams, inter-modal Layer_4, fusion transformer and gated sum.
    Full,
    /// RGB stream only; no thermal branch and no fusion module.
    BaseRgb,
    /// Both streams, but the fusion module is just the gated sum.
    NoFusionTransformer,
}

impl Variant {
    pub const ALL: [Variant; 3] = [
        Variant::Full,
        Variant::BaseRgb,
        Variant::NoFusionTransformer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::BaseRgb => "base_rgb",
            Variant::NoFusionTransformer => "no_fusion_transformer",
        }
    }

    pub fn uses_thermal(self) -> bool {
        self != Variant::BaseRgb
    }
}

impl core::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "base_rgb" => Ok(Variant::BaseRgb),
            "no_fusion_transformer" | "w/o-fusion" | "wo_fusion" => {
                Ok(Variant::NoFusionTransformer)
            }
            other => Err(Error::Config(format!(
                "unknown variant '{other}' (expected full, base_rgb or no_fusion_transformer)"
            ))),
        }
    }
}

impl core::fmt::Display for Variant {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// How Layer_4 joins the RGB and thermal token sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Layer4Concat {
    /// Token vectors are concatenated: each modality contributes half of
    /// `layer4_dim`, and every projection in the transformer sees both.
    Embedding,
    /// Sequences are concatenated along the token axis at full `layer4_dim`;
    /// modalities meet only through the shared attention context.
    Sequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub template_size: usize,
    pub search_size: usize,
    /// Channel widths: input, stem, layer_1, layer_2, layer_3, layer_4.
    pub channels: [usize; 6],
    pub layer2_blocks: usize,
    pub mv2_expansion: usize,
    /// Patch side inside the backbone transformers.
    pub backbone_patch: usize,
    /// Patch side inside the fusion transformer.
    pub fusion_patch: usize,
    pub layer3_depth: usize,
    pub layer4_depth: usize,
    /// Layer_3 attention width.
    pub layer3_dim: usize,
    /// Layer_4 attention width (the joint width when concatenating along the embedding axis).
    pub layer4_dim: usize,
    /// Width of the correlation/fusion maps.
    pub fusion_dim: usize,
    pub fusion_depth: usize,
    /// Hidden width of each prediction-head branch.
    pub head_dim: usize,
    pub head_patch: usize,
    /// Feed-forward expansion inside every transformer layer.
    pub ffn_expansion: usize,
    pub variant: Variant,
    pub layer4_concat: Layer4Concat,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            template_size: 128,
            search_size: 256,
            channels: [3, 32, 64, 128, 256, 384],
            layer2_blocks: 3,
            mv2_expansion: 2,
            backbone_patch: 2,
            fusion_patch: 8,
            layer3_depth: 2,
            layer4_depth: 4,
            layer3_dim: 128,
            layer4_dim: 192,
            fusion_dim: 128,
            fusion_depth: 1,
            head_dim: 256,
            head_patch: 2,
            ffn_expansion: 2,
            variant: Variant::Full,
            layer4_concat: Layer4Concat::Embedding,
        }
    }
}

/// Total spatial reduction of the backbone (four ×2 steps).
pub const BACKBONE_STRIDE: usize = 16;

impl ModelConfig {
    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_layer4_concat(mut self, concat: Layer4Concat) -> Self {
        self.layer4_concat = concat;
        self
    }

    pub fn search_grid(&self) -> usize {
        self.search_size / BACKBONE_STRIDE
    }

    pub fn template_grid(&self) -> usize {
        self.template_size / BACKBONE_STRIDE
    }

    /// Channels of the pixel-wise correlation volume (one per template cell).
    pub fn corr_channels(&self) -> usize {
        self.template_grid() * self.template_grid()
    }

    /// Per-modality token width entering the Layer_4 transformer.
    pub fn layer4_modality_dim(&self) -> usize {
        match (self.variant, self.layer4_concat) {
            (Variant::BaseRgb, _) | (_, Layer4Concat::Sequence) => self.layer4_dim,
            (_, Layer4Concat::Embedding) => self.layer4_dim / 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.search_size != 2 * self.template_size {
            return fail("search size must be twice the template size");
        }
        if !self.template_size.is_multiple_of(BACKBONE_STRIDE) {
            return fail("template size must be a multiple of 16");
        }
        if self.channels.windows(2).any(|w| w[0] >= w[1]) {
            return fail("channel schedule must be strictly increasing");
        }
        if self.channels[0] != 3 {
            return fail("input must have 3 channels");
        }
        let zero = [
            self.layer2_blocks,
            self.mv2_expansion,
            self.backbone_patch,
            self.fusion_patch,
            self.layer3_depth,
            self.layer4_depth,
            self.layer3_dim,
            self.layer4_dim,
            self.fusion_dim,
            self.head_dim,
            self.head_patch,
            self.ffn_expansion,
        ];
        if zero.contains(&0) {
            return fail("all extents and depths must be >= 1");
        }
        // Layer_3 sees templates at 2x the final grid; Layer_4 at the final grid.
        let t4 = self.template_grid();
        let s4 = self.search_grid();
        for (extent, patch, what) in [
            (t4 * 2, self.backbone_patch, "Layer_3 template"),
            (t4, self.backbone_patch, "Layer_4 template"),
            (s4, self.fusion_patch, "fusion map"),
            (s4, self.head_patch, "head map"),
        ] {
            if extent % patch != 0 {
                return Err(Error::Config(format!(
                    "{what} extent {extent} is not divisible by patch {patch}"
                )));
            }
        }
        if self.variant != Variant::BaseRgb
            && self.layer4_concat == Layer4Concat::Embedding
            && !self.layer4_dim.is_multiple_of(2)
        {
            return fail("layer4_dim must be even for embedding-axis concatenation");
        }
        Ok(())
    }
}
