use std::collections::BTreeMap;

use super::{Tensor, Value};
use crate::error::{Error, Result};

/// Named trainable tensors with deterministic (lexicographic) iteration order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: BTreeMap<String, Value>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a new trainable tensor. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, init: Tensor) -> Result<Value> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(Error::Contract(format!("parameter {name} registered twice")));
        }
        let v = Value::param(init);
        self.params.insert(name, v.clone());
        Ok(v)
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.params.get(name)
    }

    pub fn require(&self, name: &str) -> Result<&Value> {
        self.params
            .get(name)
            .ok_or_else(|| Error::Contract(format!("missing parameter {name}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn zero_grad(&self) {
        for v in self.params.values() {
            v.zero_grad();
        }
    }

    /// Total scalar count, optionally restricted to names with a prefix.
    pub fn count(&self, prefix: &str) -> usize {
        self.params
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, v)| v.numel())
            .sum()
    }

    /// Deep copy of every payload, in iteration order.
    pub fn snapshot(&self) -> Vec<(String, Tensor)> {
        self.params.iter().map(|(k, v)| (k.clone(), v.data().clone())).collect()
    }

    /// Overwrites a parameter's payload; shape must match.
    pub fn assign(&self, name: &str, t: Tensor) -> Result<()> {
        let v = self.require(name)?;
        let shape = v.shape();
        if shape != t.shape() {
            return Err(Error::dim("assign", &shape, t.shape()));
        }
        *v.data_mut() = t;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut p = ParamStore::new();
        p.insert("w", Tensor::scalar(1.0)).unwrap();
        assert!(p.insert("w", Tensor::scalar(2.0)).is_err());
    }

    #[test]
    fn iteration_is_sorted() {
        let mut p = ParamStore::new();
        for n in ["b", "a", "c"] {
            p.insert(n, Tensor::scalar(0.0)).unwrap();
        }
        assert_eq!(p.names().collect::<Vec<_>>(), vec!["a", "b", "c"]);
    }

    #[test]
    fn assign_checks_shape() {
        let mut p = ParamStore::new();
        p.insert("w", Tensor::vector(vec![0.0; 3])).unwrap();
        assert!(p.assign("w", Tensor::vector(vec![0.0; 2])).is_err());
        p.assign("w", Tensor::vector(vec![1.0; 3])).unwrap();
        assert_eq!(p.get("w").unwrap().to_vec(), vec![1.0; 3]);
    }
}
