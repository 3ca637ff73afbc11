//! Attribute graph and the graph-convolutional attribute decoder
//! `p(A | a)`.
//!
//! Node features start from one-hot embeddings and propagate through
//! `H' = LeakyReLU(B H W)`. The final node features act as per-attribute
//! linear classifiers applied to the macroscopic latent `a`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::graph::{Graph, ParamId, Var};
use crate::nn::{he_normal, ParamStore};
use crate::tensor::Tensor;

/// Node order of the attribute graph. Index positions are part of the
/// checkpoint format; bump [`VOCABULARY_VERSION`] when they change.
pub const ATTRIBUTE_NODES: [&str; 12] = [
    "circle",
    "oval",
    "irregular",
    "circumscribed",
    "obscured",
    "ill-defined",
    "is-lobulated",
    "not-lobulated",
    "is-spiculated",
    "not-spiculated",
    "benign",
    "malignant",
];

pub const VOCABULARY_VERSION: u32 = 1;

/// Number of clinical attributes before the benign/malignant nodes.
pub const CLINICAL_ATTRIBUTES: usize = 10;
pub const BENIGN_NODE: usize = 10;
pub const MALIGNANT_NODE: usize = 11;

pub fn vocabulary_text() -> String {
    let mut s = format!("# attribute vocabulary v{VOCABULARY_VERSION}\n");
    for n in ATTRIBUTE_NODES {
        s.push_str(n);
        s.push('\n');
    }
    s
}

/// Parses a vocabulary list written by [`vocabulary_text`].
pub fn parse_vocabulary(text: &str) -> Result<(u32, Vec<String>)> {
    let mut version = None;
    let mut nodes = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(rest) = line.strip_prefix("# attribute vocabulary v") {
            version = Some(rest.parse().map_err(|_| validation!("bad vocabulary version {rest:?}"))?);
        } else if !line.starts_with('#') {
            nodes.push(line.to_string());
        }
    }
    Ok((version.ok_or_else(|| validation!("vocabulary header missing"))?, nodes))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationConfig {
    /// Conditional probabilities at or below `threshold` are dropped.
    pub threshold: f64,
    /// Total off-diagonal weight per row after re-weighting.
    pub reweight: f64,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        Self { threshold: 0.4, reweight: 0.2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub matrix: Tensor,
    /// Attributes that never occur; their rows are pure self-loops.
    pub isolated: Vec<usize>,
}

/// Conditional co-occurrence `P(j | i) = M_ij / N_i` from an `n x c`
/// binary label matrix.
pub fn conditional_cooccurrence(labels: &Tensor) -> Result<(Tensor, Vec<f64>)> {
    let (n, c) = labels.dims2();
    if n == 0 {
        return Err(validation!("correlation matrix needs at least one labelled sample"));
    }
    let mut counts = vec![0.0; c];
    let mut pairs = vec![0.0; c * c];
    for r in 0..n {
        let row = labels.row(r);
        for i in 0..c {
            if row[i] > 0.5 {
                counts[i] += 1.0;
                for j in 0..c {
                    if j != i && row[j] > 0.5 {
                        pairs[i * c + j] += 1.0;
                    }
                }
            }
        }
    }
    let mut p = vec![0.0; c * c];
    for i in 0..c {
        if counts[i] > 0.0 {
            for j in 0..c {
                p[i * c + j] = pairs[i * c + j] / counts[i];
            }
        }
    }
    Ok((Tensor::new(&[c, c], p), counts))
}

/// Thresholded, re-weighted and row-normalized attribute correlation
/// matrix.
pub fn build_correlation_matrix(labels: &Tensor, cfg: &CorrelationConfig) -> Result<CorrelationMatrix> {
    let (p, counts) = conditional_cooccurrence(labels)?;
    let c = counts.len();
    let mut b = vec![0.0; c * c];
    let mut isolated = Vec::new();
    for i in 0..c {
        if counts[i] == 0.0 {
            isolated.push(i);
        }
        let edges: Vec<usize> =
            (0..c).filter(|&j| j != i && p.data()[i * c + j] > cfg.threshold).collect();
        if edges.is_empty() {
            b[i * c + i] = 1.0;
            continue;
        }
        let w = cfg.reweight / edges.len() as f64;
        for &j in &edges {
            b[i * c + j] = w;
        }
        b[i * c + i] = 1.0 - cfg.reweight;
    }
    for i in 0..c {
        let s: f64 = b[i * c..(i + 1) * c].iter().sum();
        if s > 0.0 {
            for v in &mut b[i * c..(i + 1) * c] {
                *v /= s;
            }
        } else {
            b[i * c + i] = 1.0;
        }
    }
    Ok(CorrelationMatrix { matrix: Tensor::new(&[c, c], b), isolated })
}

/// `H^{l+1} = LeakyReLU(B H^l W^l)` for each weight in order.
pub fn gcn_forward(g: &mut Graph, h0: Var, b: Var, weights: &[Var], slope: f64) -> Result<Var> {
    let (c, _) = g.value(h0).dims2();
    if g.value(b).shape() != [c, c] {
        return Err(validation!("correlation matrix must be {c}x{c}"));
    }
    let mut h = h0;
    for (l, &w) in weights.iter().enumerate() {
        let width = g.shape(h)[1];
        let ws = g.shape(w);
        if ws.len() != 2 || ws[0] != width {
            return Err(validation!("layer {l} weight {:?} does not accept width {width}", ws));
        }
        let bh = g.matmul(b, h);
        let pre = g.matmul(bh, w);
        h = g.leaky_relu(pre, slope);
    }
    Ok(h)
}

pub fn gcn_forward_value(h0: &Tensor, b: &Tensor, weights: &[Tensor], slope: f64) -> Result<Tensor> {
    let mut g = Graph::new();
    let h = g.constant(h0.clone());
    let bv = g.constant(b.clone());
    let ws: Vec<Var> = weights.iter().map(|w| g.constant(w.clone())).collect();
    let out = gcn_forward(&mut g, h, bv, &ws, slope)?;
    Ok(g.value(out).clone())
}

/// Attribute logits `a · H_k` for each node `k`: `[n, q] x [c, q]^T`.
pub fn attribute_logits(g: &mut Graph, a: Var, node_features: Var) -> Result<Var> {
    if g.shape(a).get(1) != g.shape(node_features).get(1) {
        return Err(validation!(
            "latent width {:?} does not match node feature width {:?}",
            g.shape(a),
            g.shape(node_features)
        ));
    }
    let ht = g.transpose(node_features);
    Ok(g.matmul(a, ht))
}

/// `sigmoid(a · H_k)` for each node.
pub fn predict_attributes(g: &mut Graph, a: Var, node_features: Var) -> Result<Var> {
    let l = attribute_logits(g, a, node_features)?;
    Ok(g.sigmoid(l))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeGraph {
    pub nodes: Vec<String>,
    /// `c x c'` initial node embeddings.
    pub embeddings: Tensor,
    pub correlation: Tensor,
}

impl AttributeGraph {
    /// One-hot embeddings (`c' = c`) over `nodes`.
    pub fn one_hot(nodes: Vec<String>, correlation: Tensor) -> Self {
        let c = nodes.len();
        Self { nodes, embeddings: Tensor::identity(c), correlation }
    }

    pub fn mammography(correlation: Tensor) -> Self {
        Self::one_hot(ATTRIBUTE_NODES.iter().map(|s| s.to_string()).collect(), correlation)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

/// Learned layer weights of the attribute GCN.
#[derive(Clone, Debug, PartialEq)]
pub struct GcnHead {
    pub weights: Vec<ParamId>,
    pub slope: f64,
}

impl GcnHead {
    /// `widths` are the hidden widths; the last layer always maps to `q_a`.
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        embedding_dim: usize,
        hidden: &[usize],
        q_a: usize,
        slope: f64,
    ) -> Self {
        let mut dims = vec![embedding_dim];
        dims.extend_from_slice(hidden);
        dims.push(q_a);
        let weights = dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| store.insert(&format!("gcn.layer{l}.weight"), he_normal(rng, &[w[0], w[1]], w[0]), true))
            .collect();
        Self { weights, slope }
    }

    pub fn node_features(&self, g: &mut Graph, store: &ParamStore, graph: &AttributeGraph) -> Result<Var> {
        let h0 = g.constant(graph.embeddings.clone());
        let b = g.constant(graph.correlation.clone());
        let ws: Vec<Var> = self.weights.iter().map(|&w| store.var(g, w)).collect();
        gcn_forward(g, h0, b, &ws, self.slope)
    }
}
