//! Parameterised convolution and group-norm layers.

use alloc::vec::Vec;

use crate::conv::conv2d;
use crate::error::Result;
use crate::ops::group_norm;
use crate::params::{Init, Params};
use crate::tensor::{ConvSpec, Tensor};

#[derive(Debug, Clone)]
pub struct ConvLayer {
    weight: Tensor,
    bias: Option<Vec<f32>>,
    spec: ConvSpec,
}

impl ConvLayer {
    pub fn build(p: &mut Params, spec: ConvSpec, bias: bool) -> Self {
        let dims = spec.weight_dims();
        let fan_in = dims[1] * dims[2] * dims[3];
        let weight = p.get("weight", dims, Init::FanIn(fan_in));
        let bias = bias.then(|| {
            p.get("bias", [spec.out_channels, 1, 1, 1], Init::FanIn(fan_in))
                .into_data()
        });
        Self { weight, bias, spec }
    }

    pub fn spec(&self) -> &ConvSpec {
        &self.spec
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn bias(&self) -> Option<&[f32]> {
        self.bias.as_deref()
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        conv2d(x, &self.weight, self.bias.as_deref(), &self.spec)
    }
}

/// Group norm with a single group (statistics over `C × H × W`).
#[derive(Debug, Clone)]
pub struct GroupNorm {
    gamma: Vec<f32>,
    beta: Vec<f32>,
}

impl GroupNorm {
    pub fn build(p: &mut Params, channels: usize) -> Self {
        Self {
            gamma: p.get("weight", [channels, 1, 1, 1], Init::Ones).into_data(),
            beta: p.get("bias", [channels, 1, 1, 1], Init::Zeros).into_data(),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        group_norm(x, 1, &self.gamma, &self.beta)
    }
}
