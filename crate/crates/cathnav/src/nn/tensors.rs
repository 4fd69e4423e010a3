//! Named parameter storage shared by models, gradients, and optimizer state.
//!
//! Insertion order is the canonical parameter order: it fixes checkpoint
//! layout, optimizer traversal, and therefore bitwise reproducibility.

use indexmap::IndexMap;
use ndarray::{Array1, Array2, ArrayD, ArrayView1, ArrayView2, IxDyn};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorMap {
    map: IndexMap<String, ArrayD<f64>>,
}

impl TensorMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: ArrayD<f64>) {
        assert!(
            self.map.insert(name.to_string(), value).is_none(),
            "duplicate tensor name {name}"
        );
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn get(&self, name: &str) -> &ArrayD<f64> {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("missing tensor {name}"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut ArrayD<f64> {
        self.map
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing tensor {name}"))
    }

    pub fn try_get(&self, name: &str) -> Result<&ArrayD<f64>> {
        self.map
            .get(name)
            .ok_or_else(|| Error::Container(format!("missing tensor {name}")))
    }

    /// View as a matrix; panics if the tensor is not 2-d.
    pub fn mat(&self, name: &str) -> ArrayView2<'_, f64> {
        self.get(name)
            .view()
            .into_dimensionality()
            .unwrap_or_else(|_| panic!("tensor {name} is not 2-d"))
    }

    /// View as a vector; panics if the tensor is not 1-d.
    pub fn vec(&self, name: &str) -> ArrayView1<'_, f64> {
        self.get(name)
            .view()
            .into_dimensionality()
            .unwrap_or_else(|_| panic!("tensor {name} is not 1-d"))
    }

    pub fn add_to(&mut self, name: &str, delta: &ArrayD<f64>) {
        let t = self.get_mut(name);
        assert_eq!(t.shape(), delta.shape(), "gradient shape for {name}");
        *t += delta;
    }

    pub fn add_to_2d(&mut self, name: &str, delta: &Array2<f64>) {
        self.add_to(name, &delta.clone().into_dyn());
    }

    pub fn add_to_1d(&mut self, name: &str, delta: &Array1<f64>) {
        self.add_to(name, &delta.clone().into_dyn());
    }

    /// Same keys and shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut out = Self::new();
        for (k, v) in &self.map {
            out.insert(k, ArrayD::zeros(IxDyn(v.shape())));
        }
        out
    }

    /// self += other * scale, keywise.
    pub fn add_scaled(&mut self, other: &TensorMap, scale: f64) {
        for (k, v) in &other.map {
            let t = self.get_mut(k);
            t.zip_mut_with(v, |a, b| *a += b * scale);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.map.values_mut() {
            v.mapv_inplace(|x| x * s);
        }
    }

    pub fn fill(&mut self, x: f64) {
        for v in self.map.values_mut() {
            v.fill(x);
        }
    }

    pub fn n_params(&self) -> usize {
        self.map.values().map(|v| v.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ArrayD<f64>)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut ArrayD<f64>)> {
        self.map.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Global L2 norm across all tensors.
    pub fn l2_norm(&self) -> f64 {
        self.map
            .values()
            .map(|v| v.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}
