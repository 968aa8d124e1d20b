use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use super::WeightStore;
use crate::config::ModelConfig;
use crate::error::Result;
use crate::model;
use crate::params::{Init, ParamSource};
use crate::tensor::Tensor;

/// Hands out freshly initialised parameters from a seeded stream, in request
/// order. Useful for building a single module outside a full model.
pub struct RandomSource {
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn fill(&mut self, dims: [usize; 4], init: Init) -> Tensor {
        match init {
            Init::Ones => Tensor::filled(dims, 1.0),
            Init::Zeros => Tensor::zeros(dims),
            Init::FanIn(fan_in) => {
                let bound = 1.0 / libm::sqrt(fan_in.max(1) as f64);
                let rng = &mut self.rng;
                Tensor::from_fn(dims, |_| {
                    // 24 random mantissa bits -> [0, 1)
                    let u = (rng.next_u32() >> 8) as f64 / (1u32 << 24) as f64;
                    ((2.0 * u - 1.0) * bound) as f32
                })
            }
        }
    }
}

impl ParamSource for RandomSource {
    fn param(&mut self, _name: &str, dims: [usize; 4], init: Init) -> Tensor {
        self.fill(dims, init)
    }
}

/// A store holding every tensor the model for `config` binds, filled
/// deterministically from `seed`: fan-in scaled uniform weights and biases,
/// unit norm scales, zero norm shifts and zero fusion gates.
pub fn init_random(config: &ModelConfig, seed: u64) -> Result<WeightStore> {
    let mut source = RandomSource::new(seed);
    let mut store = WeightStore::new();
    for spec in model::schema(config)? {
        let t = source.fill(spec.dims, spec.init);
        store.insert(spec.name, t);
    }
    Ok(store)
}
