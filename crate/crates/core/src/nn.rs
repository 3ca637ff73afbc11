//! Named parameter storage, layer building blocks and the Adam optimizer.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::graph::{Conv, Graph, ParamId, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    /// Running statistics and other buffers are stored but never optimized.
    pub trainable: bool,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl PartialEq for ParamStore {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Panics on a duplicate name; parameter names are fixed by model layout.
    pub fn insert(&mut self, name: &str, value: Tensor, trainable: bool) -> ParamId {
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push(ParamEntry { name: name.to_string(), value, trainable });
        ParamId(self.entries.len() - 1)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn var(&self, g: &mut Graph, id: ParamId) -> Var {
        g.param(id, self.get(id))
    }

    /// Rebuilds the name index after deserialization.
    pub fn reindex(&mut self) {
        self.index =
            self.entries.iter().enumerate().map(|(i, e)| (e.name.clone(), i)).collect();
    }

    /// Copies values from `other` by name. Every entry of `self` must be
    /// present in `other` with the same shape.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        for e in &mut self.entries {
            let src = other
                .by_name(&e.name)
                .ok_or_else(|| validation!("missing parameter {}", e.name))?;
            if src.shape() != e.value.shape() {
                return Err(validation!(
                    "parameter {} has shape {:?}, expected {:?}",
                    e.name,
                    src.shape(),
                    e.value.shape()
                ));
            }
            e.value = src.clone();
        }
        Ok(())
    }
}

/// He-normal initialization for a layer with the given fan-in.
pub fn he_normal<R: Rng>(rng: &mut R, shape: &[usize], fan_in: usize) -> Tensor {
    let std = libm::sqrt(2.0 / fan_in.max(1) as f64);
    let dist = Normal::new(0.0, std).expect("finite std");
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| dist.sample(rng)).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        inputs: usize,
        outputs: usize,
    ) -> Self {
        let w = he_normal(rng, &[inputs, outputs], inputs);
        let weight = store.insert(&alloc::format!("{name}.weight"), w, true);
        let bias = store.insert(&alloc::format!("{name}.bias"), Tensor::zeros(&[outputs]), true);
        Self { weight, bias, inputs, outputs }
    }

    /// A layer whose weight and bias start at zero.
    pub fn zeros(store: &mut ParamStore, name: &str, inputs: usize, outputs: usize) -> Self {
        let weight =
            store.insert(&alloc::format!("{name}.weight"), Tensor::zeros(&[inputs, outputs]), true);
        let bias = store.insert(&alloc::format!("{name}.bias"), Tensor::zeros(&[outputs]), true);
        Self { weight, bias, inputs, outputs }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let w = store.var(g, self.weight);
        let b = store.var(g, self.bias);
        let h = g.matmul(x, w);
        g.add_channels(h, b)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub conv: Conv,
}

impl Conv2d {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        conv: Conv,
    ) -> Self {
        let fan_in = in_ch * kernel * kernel;
        let w = he_normal(rng, &[out_ch, in_ch, kernel, kernel], fan_in);
        let weight = store.insert(&alloc::format!("{name}.weight"), w, true);
        let bias = store.insert(&alloc::format!("{name}.bias"), Tensor::zeros(&[out_ch]), true);
        Self { weight, bias, conv }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let w = store.var(g, self.weight);
        let b = store.var(g, self.bias);
        let h = g.conv2d(x, w, self.conv);
        g.add_channels(h, b)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvTranspose2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub conv: Conv,
}

impl ConvTranspose2d {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        conv: Conv,
    ) -> Self {
        // Each output pixel receives roughly in_ch * (kernel / stride)^2 terms.
        let per_axis = (kernel / conv.stride.max(1)).max(1);
        let fan_in = in_ch * per_axis * per_axis;
        let w = he_normal(rng, &[in_ch, out_ch, kernel, kernel], fan_in);
        let weight = store.insert(&alloc::format!("{name}.weight"), w, true);
        let bias = store.insert(&alloc::format!("{name}.bias"), Tensor::zeros(&[out_ch]), true);
        Self { weight, bias, conv }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let w = store.var(g, self.weight);
        let b = store.var(g, self.bias);
        let h = g.conv_transpose2d(x, w, self.conv);
        g.add_channels(h, b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Option<Vec<f64>>>,
    second: Vec<Option<Vec<f64>>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, step: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. Gradients for non-trainable entries are ignored.
    pub fn update<'a>(
        &mut self,
        store: &mut ParamStore,
        grads: impl IntoIterator<Item = (ParamId, &'a Tensor)>,
    ) {
        self.step += 1;
        if self.first.len() < store.len() {
            self.first.resize(store.len(), None);
            self.second.resize(store.len(), None);
        }
        let AdamConfig { learning_rate, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - libm::pow(beta1, self.step as f64);
        let bc2 = 1.0 - libm::pow(beta2, self.step as f64);
        for (id, grad) in grads {
            if !store.is_trainable(id) {
                continue;
            }
            let n = grad.len();
            let m = self.first[id.0].get_or_insert_with(|| vec![0.0; n]);
            let v = self.second[id.0].get_or_insert_with(|| vec![0.0; n]);
            let p = store.get_mut(id).data_mut();
            for i in 0..n {
                let gi = grad.data()[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= learning_rate * mhat / (libm::sqrt(vhat) + eps);
            }
        }
    }
}
