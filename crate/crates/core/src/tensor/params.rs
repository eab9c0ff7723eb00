use indexmap::IndexMap;

use super::NumericArray;
use crate::error::{Error, Result};

/// Ordered collection of named trainable arrays.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore {
    entries: IndexMap<String, NumericArray>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: NumericArray) {
        self.entries.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&NumericArray> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut NumericArray> {
        self.entries.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &NumericArray)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut NumericArray)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.values().map(NumericArray::len).sum()
    }

    /// Same names, same order, same shapes.
    pub fn check_compatible(&self, other: &ParameterStore) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::Architecture(format!(
                "{} parameter arrays vs {}",
                self.entries.len(),
                other.entries.len()
            )));
        }
        for ((na, a), (nb, b)) in self.entries.iter().zip(&other.entries) {
            if na != nb || a.shape() != b.shape() {
                return Err(Error::Architecture(format!(
                    "`{na}` {:?} vs `{nb}` {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Gradients keyed by parameter name, shapes matching the store.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradientSet {
    entries: IndexMap<String, NumericArray>,
}

impl GradientSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// A zero gradient for every parameter in `store`.
    pub fn zeros_like(store: &ParameterStore) -> Self {
        Self {
            entries: store
                .iter()
                .map(|(k, v)| (k.to_owned(), NumericArray::zeros(v.shape())))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&NumericArray> {
        self.entries.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &NumericArray)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Adds `value` into the entry for `name`, creating it if absent.
    pub fn accumulate(&mut self, name: &str, value: &NumericArray) {
        match self.entries.get_mut(name) {
            Some(existing) => existing.add_assign(value),
            None => {
                self.entries.insert(name.to_owned(), value.clone());
            }
        }
    }

    /// Entry-wise sum; entries missing on either side are treated as zero.
    pub fn merge(&mut self, other: &GradientSet) {
        for (name, value) in &other.entries {
            self.accumulate(name, value);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.entries.values_mut() {
            v.scale_assign(factor);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.entries
            .values()
            .flat_map(|v| v.values().iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Fills in zero entries for store parameters that received no gradient
    /// and reorders to match the store.
    pub fn completed_for(mut self, store: &ParameterStore) -> Result<Self> {
        let mut out = IndexMap::with_capacity(store.len());
        for (name, value) in store.iter() {
            let grad = self
                .entries
                .swap_remove(name)
                .unwrap_or_else(|| NumericArray::zeros(value.shape()));
            if grad.shape() != value.shape() {
                return Err(Error::shape(
                    "GradientSet::completed_for",
                    format!("`{name}` gradient {:?} vs parameter {:?}", grad.shape(), value.shape()),
                ));
            }
            out.insert(name.to_owned(), grad);
        }
        if let Some(extra) = self.entries.keys().next() {
            return Err(Error::invalid(format!("gradient for unknown parameter `{extra}`")));
        }
        Ok(Self { entries: out })
    }
}
