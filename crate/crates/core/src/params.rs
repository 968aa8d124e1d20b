//! Parameter sourcing for model construction.
//!
//! The model is built once against a [`ParamSource`]. Binding to a
//! [`WeightStore`], recording the schema and random initialisation all go
//! through the same construction code, so the name schema has a single
//! definition.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::weights::WeightStore;

/// How a freshly initialised parameter is filled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in `±1/sqrt(fan_in)`.
    FanIn(usize),
    Ones,
    Zeros,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub dims: [usize; 4],
    pub init: Init,
}

pub trait ParamSource {
    fn param(&mut self, name: &str, dims: [usize; 4], init: Init) -> Tensor;
}

/// Prefixing view over a source: `Params::root(src).sub("backbone").sub("stem")`.
pub struct Params<'a> {
    source: &'a mut dyn ParamSource,
    prefix: String,
}

impl<'a> Params<'a> {
    pub fn root(source: &'a mut dyn ParamSource) -> Self {
        Self {
            source,
            prefix: String::new(),
        }
    }

    pub fn sub(&mut self, name: impl core::fmt::Display) -> Params<'_> {
        let prefix = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{}", self.prefix, name)
        };
        Params {
            source: &mut *self.source,
            prefix,
        }
    }

    pub fn get(&mut self, name: &str, dims: [usize; 4], init: Init) -> Tensor {
        let full = if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{}", self.prefix, name)
        };
        self.source.param(&full, dims, init)
    }
}

/// Takes parameters from a store, collecting every missing, mis-shaped and
/// unused name.
pub struct Binder<'s> {
    store: &'s WeightStore,
    used: BTreeSet<String>,
    missing: Vec<String>,
    mismatched: Vec<String>,
}

impl<'s> Binder<'s> {
    pub fn new(store: &'s WeightStore) -> Self {
        Self {
            store,
            used: BTreeSet::new(),
            missing: Vec::new(),
            mismatched: Vec::new(),
        }
    }

    pub fn finish(self) -> Result<()> {
        let extra: Vec<String> = self
            .store
            .names()
            .filter(|n| !self.used.contains(*n))
            .map(ToString::to_string)
            .collect();
        if self.missing.is_empty() && self.mismatched.is_empty() && extra.is_empty() {
            Ok(())
        } else {
            Err(Error::Binding {
                missing: self.missing,
                extra,
                mismatched: self.mismatched,
            })
        }
    }
}

impl ParamSource for Binder<'_> {
    fn param(&mut self, name: &str, dims: [usize; 4], _init: Init) -> Tensor {
        if !self.used.insert(name.to_string()) {
            // A name requested twice is a schema bug, surface it as mismatch.
            self.mismatched.push(format!("{name} (bound twice)"));
            return Tensor::zeros(dims);
        }
        match self.store.get(name) {
            Some(t) if t.dims() == dims => t.clone(),
            Some(t) => {
                self.mismatched.push(format!(
                    "{name} (expected {:?}, found {:?})",
                    dims,
                    t.dims()
                ));
                Tensor::zeros(dims)
            }
            None => {
                self.missing.push(name.to_string());
                Tensor::zeros(dims)
            }
        }
    }
}

/// Records the requested schema and hands out zero tensors.
#[derive(Default)]
pub struct SchemaRecorder {
    pub specs: Vec<ParamSpec>,
}

impl ParamSource for SchemaRecorder {
    fn param(&mut self, name: &str, dims: [usize; 4], init: Init) -> Tensor {
        self.specs.push(ParamSpec {
            name: name.to_string(),
            dims,
            init,
        });
        Tensor::zeros(dims)
    }
}
