//! Named tensor store, its `.mmvt` byte encoding and random initialisation.

mod format;
mod init;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

pub use format::{decode, encode, FormatError, FORMAT_VERSION, MAGIC};
pub use init::{init_random, RandomSource};

use crate::tensor::Tensor;

/// Ordered map from dotted parameter name to tensor. Iteration follows
/// insertion order, which is also the on-disk order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    entries: Vec<(String, Tensor)>,
    index: BTreeMap<String, usize>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a tensor; returns `false` (and leaves the store unchanged) if
    /// the name already exists.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> bool {
        let name = name.into();
        if self.index.contains_key(&name) {
            return false;
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, tensor));
        true
    }

    /// Replaces an existing tensor in place, keeping its position.
    pub fn replace(&mut self, name: &str, tensor: Tensor) -> Option<Tensor> {
        let i = *self.index.get(name)?;
        Some(core::mem::replace(&mut self.entries[i].1, tensor))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let i = *self.index.get(name)?;
        Some(&mut self.entries[i].1)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    /// Element count over all tensors whose name starts with `prefix`
    /// (every tensor when `prefix` is `None`).
    pub fn param_count(&self, prefix: Option<&str>) -> usize {
        self.iter()
            .filter(|(n, _)| prefix.is_none_or(|p| n.starts_with(p)))
            .map(|(_, t)| t.len())
            .sum()
    }
}

impl FromIterator<(String, Tensor)> for WeightStore {
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        let mut s = WeightStore::new();
        for (n, t) in iter {
            s.insert(n, t);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn census_and_prefix_filter() {
        let mut s = WeightStore::new();
        assert_eq!(s.param_count(None), 0);
        assert!(s.insert("a.w", Tensor::zeros([128, 64, 1, 1])));
        assert!(s.insert("b.w", Tensor::zeros([3, 1, 1, 1])));
        assert!(!s.insert("a.w", Tensor::zeros([1, 1, 1, 1])));
        assert_eq!(s.param_count(Some("a.")), 8192);
        assert_eq!(s.param_count(None), 8195);
        assert_eq!(s.names().collect::<Vec<_>>(), ["a.w", "b.w"]);
    }

    #[test]
    fn replace_keeps_order() {
        let mut s = WeightStore::new();
        s.insert("x", Tensor::zeros([1, 1, 1, 1]));
        s.insert("y", Tensor::zeros([1, 1, 1, 1]));
        s.replace("x", Tensor::filled([2, 1, 1, 1], 1.0)).unwrap();
        assert_eq!(s.names().collect::<Vec<_>>(), ["x", "y"]);
        assert_eq!(s.get("x").unwrap().len(), 2);
        assert!(s.replace("z", Tensor::zeros([1, 1, 1, 1])).is_none());
    }
}
