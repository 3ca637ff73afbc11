//! Central finite-difference checks for graph operations.

use alloc::vec::Vec;

use crate::graph::{Graph, Var};
use crate::nn::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheck {
    /// `||analytic - numeric|| / max(||analytic||, ||numeric||)` per input.
    pub relative_errors: Vec<f64>,
}

impl GradCheck {
    pub fn max_relative_error(&self) -> f64 {
        self.relative_errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Fixed projection weights so non-scalar outputs reduce to a scalar with
/// non-trivial gradient in every coordinate.
fn projection(n: usize) -> Tensor {
    Tensor::new(&[n], (0..n).map(|i| 1.0 + 0.5 * libm::sin(1.3 * i as f64 + 0.4)).collect())
}

fn reduce(g: &mut Graph, out: Var) -> Var {
    let shape = g.shape(out).to_vec();
    if g.value(out).len() == 1 {
        return out;
    }
    let p = projection(g.value(out).len()).reshape(&shape);
    let p = g.constant(p);
    let prod = g.mul(out, p);
    g.sum(prod)
}

fn evaluate(inputs: &[Tensor], f: &impl Fn(&mut Graph, &[Var]) -> Var) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = f(&mut g, &vars);
    let loss = reduce(&mut g, out);
    g.value(loss).item()
}

/// Compares reverse-mode gradients of `f` against central differences with
/// step `h` for every element of every input.
pub fn check_gradients(
    inputs: &[Tensor],
    h: f64,
    f: impl Fn(&mut Graph, &[Var]) -> Var,
) -> GradCheck {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let out = f(&mut g, &vars);
    let loss = reduce(&mut g, out);
    let grads = g.backward(loss);

    let mut relative_errors = Vec::with_capacity(inputs.len());
    for (k, input) in inputs.iter().enumerate() {
        let analytic =
            grads.get(vars[k]).cloned().unwrap_or_else(|| Tensor::zeros(input.shape()));
        let mut numeric = Vec::with_capacity(input.len());
        for j in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[j] -= h;
            numeric.push((evaluate(&plus, &f) - evaluate(&minus, &f)) / (2.0 * h));
        }
        relative_errors.push(relative_error(analytic.data(), &numeric));
    }
    GradCheck { relative_errors }
}

/// Gradients with both norms below this are structurally zero (for example
/// a bias followed by batch normalization); only rounding noise remains.
pub const ZERO_GRADIENT: f64 = 1e-8;

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n) * (a - n)).sum();
    let na: f64 = analytic.iter().map(|a| a * a).sum();
    let nn: f64 = numeric.iter().map(|a| a * a).sum();
    let denom = libm::sqrt(na).max(libm::sqrt(nn));
    if denom < ZERO_GRADIENT {
        0.0
    } else {
        libm::sqrt(diff) / denom
    }
}

fn evaluate_store(store: &ParamStore, f: &impl Fn(&mut Graph, &ParamStore) -> Var) -> f64 {
    let mut g = Graph::new();
    let out = f(&mut g, store);
    let loss = reduce(&mut g, out);
    g.value(loss).item()
}

/// Same comparison over every trainable tensor of `store`, in store order.
/// `f` must read parameters through [`ParamStore::var`].
pub fn check_param_gradients(
    store: &ParamStore,
    h: f64,
    f: impl Fn(&mut Graph, &ParamStore) -> Var,
) -> GradCheck {
    let mut g = Graph::new();
    let out = f(&mut g, store);
    let loss = reduce(&mut g, out);
    let grads = g.backward(loss);
    let mut analytic: Vec<Option<Tensor>> = alloc::vec![None; store.len()];
    for (id, t) in grads.params(&g) {
        match &mut analytic[id.0] {
            Some(acc) => acc.add_assign(t),
            slot => *slot = Some(t.clone()),
        }
    }
    let mut work = store.clone();
    let mut relative_errors = Vec::new();
    for (k, entry) in store.entries().iter().enumerate() {
        if !entry.trainable {
            continue;
        }
        let id = crate::graph::ParamId(k);
        let mut numeric = Vec::with_capacity(entry.value.len());
        for j in 0..entry.value.len() {
            let orig = entry.value.data()[j];
            work.get_mut(id).data_mut()[j] = orig + h;
            let up = evaluate_store(&work, &f);
            work.get_mut(id).data_mut()[j] = orig - h;
            let down = evaluate_store(&work, &f);
            work.get_mut(id).data_mut()[j] = orig;
            numeric.push((up - down) / (2.0 * h));
        }
        let a = analytic[k].clone().unwrap_or_else(|| Tensor::zeros(entry.value.shape()));
        relative_errors.push(relative_error(a.data(), &numeric));
    }
    GradCheck { relative_errors }
}
