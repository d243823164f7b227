use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Named `f32` tensors kept in lexicographic byte order of their names.
///
/// The iteration order is the canonical hashing order; it does not depend on
/// the order in which parameters were inserted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterSet {
    entries: BTreeMap<String, Tensor<f32>>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a parameter, rejecting duplicate names.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<f32>) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::Spec(format!("duplicate parameter name '{name}'")));
        }
        self.entries.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<f32>> {
        self.entries.get_mut(name)
    }

    /// Looks up a parameter that the caller knows must exist.
    pub fn expect(&self, name: &str) -> &Tensor<f32> {
        self.entries
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter '{name}'"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<f32>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<f32>)> {
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

    /// Total number of scalar values.
    pub fn num_values(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.values().all(Tensor::all_finite)
    }

    /// Zero tensors with the same names and shapes.
    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape()).expect("valid shape")))
                .collect(),
        }
    }
}

impl FromIterator<(String, Tensor<f32>)> for ParameterSet {
    /// Later duplicates overwrite earlier ones.
    fn from_iter<I: IntoIterator<Item = (String, Tensor<f32>)>>(iter: I) -> Self {
        Self {
            entries: iter.into_iter().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iteration_is_lexicographic() {
        let mut p = ParameterSet::new();
        for name in ["b", "a.weight", "B", "a"] {
            p.insert(name, Tensor::zeros(&[1]).unwrap()).unwrap();
        }
        let names: Vec<_> = p.names().collect();
        assert_eq!(names, vec!["B", "a", "a.weight", "b"]);
    }

    #[test]
    fn duplicate_rejected() {
        let mut p = ParameterSet::new();
        p.insert("w", Tensor::zeros(&[2]).unwrap()).unwrap();
        assert!(p.insert("w", Tensor::zeros(&[2]).unwrap()).is_err());
    }
}
