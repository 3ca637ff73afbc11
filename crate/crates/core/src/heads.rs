//! Generative side: priors `p(s, a)` and `p(z | d)`, the image decoder
//! `p(x | z, s, a)` and the disease classifier `p(y | s, a)`.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::{Backbone, EncoderConfig, GaussianPosterior, InputShape, LOG_VAR_MAX, LOG_VAR_MIN};
use crate::error::{validation, Result};
use crate::graph::{Conv, Graph, ParamId, Var};
use crate::nn::{he_normal, ConvTranspose2d, Linear, ParamStore};
use crate::objectives::Posterior;
use crate::tensor::Tensor;

/// Isotropic standard normal over the concatenated `(s, a)` block.
pub fn prior_sa(rows: usize, q_s: usize, q_a: usize) -> GaussianPosterior {
    GaussianPosterior::standard(rows, q_s + q_a)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainEmbedding {
    /// `d` enters the prior network as a one-hot vector of length `m`.
    #[default]
    OneHot,
    /// A learned `m x dim` table.
    Learned { dim: usize },
}

/// `p(z | d)`: domain embedding, then a two-layer perceptron emitting mean
/// and log-variance.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainPrior {
    table: Option<ParamId>,
    hidden: Linear,
    out: Linear,
    domains: usize,
    q_z: usize,
    slope: f64,
}

impl DomainPrior {
    /// The output layer starts at zero, so every domain begins at `N(0, I)`.
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        domains: usize,
        q_z: usize,
        hidden: usize,
        embedding: DomainEmbedding,
        slope: f64,
    ) -> Self {
        let (table, width) = match embedding {
            DomainEmbedding::OneHot => (None, domains),
            DomainEmbedding::Learned { dim } => {
                let t = he_normal(rng, &[domains, dim], 1);
                (Some(store.insert("prior_z.embedding", t, true)), dim)
            }
        };
        let hidden = Linear::new(store, rng, "prior_z.hidden", width, hidden);
        let out = Linear::zeros(store, "prior_z.out", hidden.outputs, 2 * q_z);
        Self { table, hidden, out, domains, q_z, slope }
    }

    pub fn output_layer(&self) -> &Linear {
        &self.out
    }

    /// One prior row per entry of `domains`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, domains: &[usize]) -> Result<Posterior> {
        let m = self.domains;
        if let Some(&d) = domains.iter().find(|&&d| d >= m) {
            return Err(validation!("domain {d} out of range for {m} domains"));
        }
        let mut onehot = Tensor::zeros(&[domains.len(), m]);
        for (r, &d) in domains.iter().enumerate() {
            onehot.data_mut()[r * m + d] = 1.0;
        }
        let mut e = g.constant(onehot);
        if let Some(t) = self.table {
            let table = store.var(g, t);
            e = g.matmul(e, table);
        }
        let h = self.hidden.forward(g, store, e);
        let h = g.leaky_relu(h, self.slope);
        let out = self.out.forward(g, store, h);
        let mean = g.slice_cols(out, 0, self.q_z);
        let raw = g.slice_cols(out, self.q_z, 2 * self.q_z);
        let log_var = g.clamp(raw, LOG_VAR_MIN, LOG_VAR_MAX);
        Ok(Posterior { mean, log_var })
    }

    /// Prior parameters for a single domain as a `1 x q_z` Gaussian.
    pub fn prior_z(&self, store: &ParamStore, d: usize) -> Result<GaussianPosterior> {
        let mut g = Graph::new();
        let p = self.forward(&mut g, store, &[d])?;
        Ok(p.value(&g))
    }
}

#[derive(Clone, Debug, PartialEq)]
enum DecoderBody {
    Mlp(Vec<Linear>),
    Deconv { project: Linear, start: [usize; 3], ups: Vec<ConvTranspose2d> },
}

/// Mirror of the encoder backbone mapping `(z, s, a)` back to input space.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoder {
    body: DecoderBody,
    dims: [usize; 3],
    input: InputShape,
    slope: f64,
}

impl Decoder {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, cfg: &EncoderConfig) -> Self {
        let latent = cfg.q_z + cfg.q_s + cfg.q_a;
        let body = match (&cfg.backbone, &cfg.input) {
            (Backbone::Mlp { hidden }, InputShape::Vector { dim }) => {
                let mut widths: Vec<usize> = hidden.iter().rev().copied().collect();
                widths.push(*dim);
                let mut inputs = latent;
                let mut layers = Vec::new();
                for (i, &w) in widths.iter().enumerate() {
                    layers.push(Linear::new(store, rng, &format!("decoder.layer{i}"), inputs, w));
                    inputs = w;
                }
                DecoderBody::Mlp(layers)
            }
            (backbone, &InputShape::Image { channels, height, width }) => {
                let widths = backbone.downsample_widths();
                let factor = 1usize << widths.len();
                let start = [widths[widths.len() - 1], height / factor, width / factor];
                let project = Linear::new(
                    store,
                    rng,
                    "decoder.project",
                    latent,
                    start[0] * start[1] * start[2],
                );
                let mut ups = Vec::new();
                for k in (0..widths.len()).rev() {
                    let out = if k == 0 { channels } else { widths[k - 1] };
                    ups.push(ConvTranspose2d::new(
                        store,
                        rng,
                        &format!("decoder.up{}", widths.len() - 1 - k),
                        widths[k],
                        out,
                        4,
                        Conv { stride: 2, pad: 1 },
                    ));
                }
                DecoderBody::Deconv { project, start, ups }
            }
            _ => unreachable!("validated backbone/input pairing"),
        };
        Self { body, dims: [cfg.q_z, cfg.q_s, cfg.q_a], input: cfg.input.clone(), slope: cfg.leaky_slope }
    }

    pub fn output_shape(&self, rows: usize) -> Vec<usize> {
        self.input.batch_shape(rows)
    }

    pub fn decode(&self, g: &mut Graph, store: &ParamStore, z: Var, s: Var, a: Var) -> Result<Var> {
        for (v, &q) in [z, s, a].iter().zip(&self.dims) {
            let shape = g.shape(*v);
            if shape.len() != 2 || shape[1] != q {
                return Err(validation!("latent of shape {:?} does not match dim {q}", shape));
            }
        }
        let n = g.shape(z)[0];
        if g.shape(s)[0] != n || g.shape(a)[0] != n {
            return Err(validation!("latent blocks have different row counts"));
        }
        let h = g.concat(&[z, s, a]);
        Ok(match &self.body {
            DecoderBody::Mlp(layers) => {
                let mut h = h;
                for (i, l) in layers.iter().enumerate() {
                    h = l.forward(g, store, h);
                    if i + 1 < layers.len() {
                        h = g.leaky_relu(h, self.slope);
                    }
                }
                h
            }
            DecoderBody::Deconv { project, start, ups } => {
                let h = project.forward(g, store, h);
                let h = g.leaky_relu(h, self.slope);
                let mut h = g.reshape(h, &[n, start[0], start[1], start[2]]);
                for (i, up) in ups.iter().enumerate() {
                    h = up.forward(g, store, h);
                    if i + 1 < ups.len() {
                        h = g.leaky_relu(h, self.slope);
                    }
                }
                h
            }
        })
    }
}

/// Which latent blocks are kept for a partial reconstruction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentSubset {
    pub s: bool,
    pub a: bool,
    pub z: bool,
}

impl LatentSubset {
    pub const ALL: Self = Self { s: true, a: true, z: true };

    pub fn is_empty(&self) -> bool {
        !(self.s || self.a || self.z)
    }

    /// Parses names like `"s,a"`, `"z"` or `"s+a+z"`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut out = Self::default();
        for part in text.split([',', '+']).map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "s" => out.s = true,
                "a" => out.a = true,
                "z" => out.z = true,
                other => return Err(validation!("unknown latent block {other:?}")),
            }
        }
        Ok(out)
    }

    pub fn label(&self) -> alloc::string::String {
        let mut parts = Vec::new();
        if self.s {
            parts.push("s");
        }
        if self.a {
            parts.push("a");
        }
        if self.z {
            parts.push("z");
        }
        parts.join("+")
    }
}

/// How excluded blocks are filled before decoding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartialFill {
    #[default]
    Zero,
    PriorMean,
}

/// Decodes with excluded blocks replaced by `fill` (one `[n, q]` node per
/// block, ordered `z, s, a`).
pub fn partial_reconstruction(
    g: &mut Graph,
    store: &ParamStore,
    decoder: &Decoder,
    which: LatentSubset,
    latents: [Var; 3],
    fill: [Var; 3],
) -> Result<Var> {
    if which.is_empty() {
        return Err(validation!("partial reconstruction needs at least one latent block"));
    }
    let pick = |keep: bool, i: usize| if keep { latents[i] } else { fill[i] };
    decoder.decode(g, store, pick(which.z, 0), pick(which.s, 1), pick(which.a, 2))
}

/// `p(y | s, a)`: a two-layer perceptron on the concatenated `(s, a)`
/// sample with sigmoid outputs. Binary tasks use one output; `K > 2`
/// classes use one-vs-rest outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierHead {
    hidden: Linear,
    out: Linear,
    q_s: usize,
    q_a: usize,
    slope: f64,
}

impl ClassifierHead {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        q_s: usize,
        q_a: usize,
        hidden: usize,
        outputs: usize,
        slope: f64,
    ) -> Self {
        let hidden = Linear::new(store, rng, "classifier.hidden", q_s + q_a, hidden);
        let out = Linear::new(store, rng, "classifier.out", hidden.outputs, outputs);
        Self { hidden, out, q_s, q_a, slope }
    }

    pub fn output_layer(&self) -> &Linear {
        &self.out
    }

    pub fn logits(&self, g: &mut Graph, store: &ParamStore, s: Var, a: Var) -> Result<Var> {
        if g.shape(s).get(1) != Some(&self.q_s) || g.shape(a).get(1) != Some(&self.q_a) {
            return Err(validation!("classifier expects s of dim {} and a of dim {}", self.q_s, self.q_a));
        }
        let h = g.concat(&[s, a]);
        let h = self.hidden.forward(g, store, h);
        let h = g.leaky_relu(h, self.slope);
        Ok(self.out.forward(g, store, h))
    }

    pub fn classify(&self, g: &mut Graph, store: &ParamStore, s: Var, a: Var) -> Result<Var> {
        let l = self.logits(g, store, s, a)?;
        Ok(g.sigmoid(l))
    }
}
