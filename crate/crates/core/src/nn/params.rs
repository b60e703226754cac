use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::math;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// Named parameter tensors in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: BTreeMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) -> ParamId {
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        let id = ParamId(self.tensors.len());
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        self.index.insert(name.to_string(), id);
        id
    }

    /// `rows × cols` weight drawn from N(0, 1/fan_in).
    pub fn gaussian(&mut self, name: &str, rows: usize, cols: usize, rng: &mut Rng) -> ParamId {
        let s = 1.0 / math::sqrt(rows as f64);
        let data = (0..rows * cols).map(|_| rng.normal() * s).collect();
        self.insert(name, Tensor::matrix(rows, cols, data).expect("shape"))
    }

    pub fn constant(&mut self, name: &str, rows: usize, cols: usize, v: f64) -> ParamId {
        self.insert(name, Tensor::filled(&[rows, cols], v))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn to_map(&self) -> BTreeMap<String, Tensor> {
        self.names
            .iter()
            .cloned()
            .zip(self.tensors.iter().cloned())
            .collect()
    }

    /// Overwrite every registered tensor from `map` (shapes must match).
    pub fn load_map(&mut self, map: &BTreeMap<String, Tensor>) -> Result<()> {
        for (name, t) in self.names.iter().zip(self.tensors.iter_mut()) {
            let src = map
                .get(name)
                .ok_or_else(|| Error::MissingParameter(name.clone()))?;
            if src.len() != t.len() {
                return Err(Error::Shape(format!(
                    "parameter `{name}` has {} values, expected {}",
                    src.len(),
                    t.len()
                )));
            }
            t.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }

    pub fn quantize_f32(&mut self) {
        for t in &mut self.tensors {
            t.quantize_f32();
        }
    }
}

/// One gradient tensor per parameter, same order as the store.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            tensors: store
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.shape()))
                .collect(),
        }
    }

    pub(crate) fn accumulate(&mut self, id: ParamId, g: &[f64]) {
        for (a, b) in self.tensors[id.0].data_mut().iter_mut().zip(g) {
            *a += b;
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in &mut self.tensors {
            for v in t.data_mut() {
                *v *= s;
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.tensors.iter().enumerate().map(|(i, t)| (ParamId(i), t))
    }

    /// First non-finite entry as `(parameter index, flat offset)`.
    pub fn first_non_finite(&self) -> Option<(ParamId, usize)> {
        self.tensors.iter().enumerate().find_map(|(i, t)| {
            t.data()
                .iter()
                .position(|v| !v.is_finite())
                .map(|k| (ParamId(i), k))
        })
    }
}
