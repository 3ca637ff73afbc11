//! Inference networks: the domain-shared relevant encoder `q(s, a | x)` and
//! the domain-specific irrelevant encoder `q(z | x, d)` whose normalization
//! sites hold one `(gamma, beta)` set per training domain.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, validation, Error, Result};
use crate::graph::{BatchStats, Conv, Graph, ParamId, Var};
use crate::nn::{Conv2d, Linear, ParamStore};
use crate::objectives::Posterior;
use crate::tensor::Tensor;

pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;

/// Diagonal Gaussian with `[n, q]` mean and log-variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPosterior {
    pub mean: Tensor,
    pub log_var: Tensor,
}

impl GaussianPosterior {
    pub fn standard(rows: usize, dim: usize) -> Self {
        Self { mean: Tensor::zeros(&[rows, dim]), log_var: Tensor::zeros(&[rows, dim]) }
    }

    pub fn dim(&self) -> usize {
        self.mean.dims2().1
    }

    pub fn rows(&self) -> usize {
        self.mean.dims2().0
    }
}

/// `mean + exp(log_var / 2) * noise`.
pub fn reparameterize(g: &mut Graph, post: Posterior, noise: &Tensor) -> Result<Var> {
    if g.shape(post.mean) != noise.shape() {
        return Err(validation!(
            "noise shape {:?} does not match posterior {:?}",
            noise.shape(),
            g.shape(post.mean)
        ));
    }
    let half = g.scale(post.log_var, 0.5);
    let std = g.exp(half);
    let eps = g.constant(noise.clone());
    let scaled = g.mul(std, eps);
    Ok(g.add(post.mean, scaled))
}

pub fn reparameterize_value(post: &GaussianPosterior, noise: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let p = Posterior::constant(&mut g, post);
    let v = reparameterize(&mut g, p, noise)?;
    Ok(g.value(v).clone())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputShape {
    Vector { dim: usize },
    Image { channels: usize, height: usize, width: usize },
}

impl InputShape {
    pub fn numel(&self) -> usize {
        match *self {
            InputShape::Vector { dim } => dim,
            InputShape::Image { channels, height, width } => channels * height * width,
        }
    }

    /// Full tensor shape for a batch of `n`.
    pub fn batch_shape(&self, n: usize) -> Vec<usize> {
        match *self {
            InputShape::Vector { dim } => vec![n, dim],
            InputShape::Image { channels, height, width } => vec![n, channels, height, width],
        }
    }

    pub fn check(&self, x: &Tensor) -> Result<usize> {
        let n = x.shape().first().copied().unwrap_or(0);
        if n == 0 || x.shape() != self.batch_shape(n).as_slice() {
            return Err(validation!("input of shape {:?} does not match {:?}", x.shape(), self));
        }
        Ok(n)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backbone {
    /// Dense layers, each followed by a normalization site.
    Mlp { hidden: Vec<usize> },
    /// Stride-2 4x4 convolutions, each followed by a normalization site,
    /// then global average pooling.
    Conv { widths: Vec<usize> },
    /// Residual network: 7x7 stride-2 stem, then stages of two-conv basic
    /// blocks. `blocks = [3, 4, 6, 3]` with widths `[64, 128, 256, 512]`
    /// gives the 34-layer layout.
    Residual { widths: Vec<usize>, blocks: Vec<usize> },
}

impl Backbone {
    pub fn toy_conv() -> Self {
        Backbone::Conv { widths: vec![16, 32, 64, 128] }
    }

    pub fn resnet34() -> Self {
        Backbone::Residual { widths: vec![64, 128, 256, 512], blocks: vec![3, 4, 6, 3] }
    }

    /// Channel count after each spatial halving, shallow to deep.
    pub fn downsample_widths(&self) -> Vec<usize> {
        match self {
            Backbone::Mlp { .. } => Vec::new(),
            Backbone::Conv { widths } => widths.clone(),
            Backbone::Residual { widths, .. } => {
                let mut out = vec![widths[0]];
                out.extend_from_slice(&widths[1..]);
                out
            }
        }
    }

    pub fn feature_dim(&self, input: &InputShape) -> usize {
        match self {
            Backbone::Mlp { hidden } => hidden.last().copied().unwrap_or_else(|| input.numel()),
            Backbone::Conv { widths } | Backbone::Residual { widths, .. } => {
                widths.last().copied().unwrap_or(0)
            }
        }
    }
}

/// Fraction of normalization sites that become domain adaptive layers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DalRatio {
    OneLayer,
    OneThird,
    Half,
    TwoThirds,
    #[default]
    All,
}

impl DalRatio {
    pub fn site_count(self, total: usize) -> usize {
        let ceil = |num: usize, den: usize| (total * num).div_ceil(den);
        match self {
            DalRatio::OneLayer => total.min(1),
            DalRatio::OneThird => ceil(1, 3),
            DalRatio::Half => ceil(1, 2),
            DalRatio::TwoThirds => ceil(2, 3),
            DalRatio::All => total,
        }
    }
}

/// How the irrelevant branch specializes to domains. Only `Dal` is built;
/// the other names are reserved for the multiple-encoder and grouped-layer
/// ablations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainMechanism {
    #[default]
    Dal,
    MultipleEncoders,
    GroupedLayers,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub input: InputShape,
    pub backbone: Backbone,
    pub q_s: usize,
    pub q_a: usize,
    pub q_z: usize,
    pub dal_ratio: DalRatio,
    #[serde(default)]
    pub mechanism: DomainMechanism,
    pub domains: usize,
    pub norm_eps: f64,
    pub momentum: f64,
    pub leaky_slope: f64,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mechanism != DomainMechanism::Dal {
            return Err(config_err!("domain mechanism {:?} is not implemented", self.mechanism));
        }
        if self.q_s == 0 || self.q_a == 0 || self.q_z == 0 {
            return Err(config_err!("latent dimensions must be positive"));
        }
        if self.domains == 0 {
            return Err(config_err!("at least one training domain is required"));
        }
        match (&self.input, &self.backbone) {
            (InputShape::Vector { .. }, Backbone::Mlp { .. }) => Ok(()),
            (InputShape::Image { height, width, .. }, b @ (Backbone::Conv { .. } | Backbone::Residual { .. })) => {
                if let Backbone::Residual { widths, blocks } = b {
                    if widths.len() != blocks.len() || widths.is_empty() {
                        return Err(config_err!("residual widths and blocks must align"));
                    }
                }
                let factor = 1usize << b.downsample_widths().len();
                if b.downsample_widths().is_empty() || height % factor != 0 || width % factor != 0 {
                    return Err(config_err!(
                        "image side must be divisible by {factor} for this backbone"
                    ));
                }
                Ok(())
            }
            _ => Err(config_err!("backbone {:?} cannot consume input {:?}", self.backbone, self.input)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A pending running-statistics update recorded during a training forward.
#[derive(Clone, Debug)]
pub struct StatUpdate {
    pub mean: ParamId,
    pub var: ParamId,
    pub stats: BatchStats,
}

/// Per-call state for a forward pass.
#[derive(Debug)]
pub struct ForwardCtx {
    pub mode: Mode,
    pub stat_updates: Vec<StatUpdate>,
    /// Number of per-domain parameter lookups made by DAL sites.
    pub dal_lookups: usize,
}

impl ForwardCtx {
    pub fn new(mode: Mode) -> Self {
        Self { mode, stat_updates: Vec::new(), dal_lookups: 0 }
    }

    /// Folds recorded batch statistics into the running buffers.
    pub fn apply_stat_updates(&mut self, store: &mut ParamStore, momentum: f64) {
        for u in self.stat_updates.drain(..) {
            for (dst, src) in store.get_mut(u.mean).data_mut().iter_mut().zip(&u.stats.mean) {
                *dst = (1.0 - momentum) * *dst + momentum * src;
            }
            for (dst, src) in store.get_mut(u.var).data_mut().iter_mut().zip(&u.stats.var) {
                *dst = (1.0 - momentum) * *dst + momentum * src;
            }
        }
    }
}

/// One affine normalization parameter set with its running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct NormParams {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl NormParams {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Self {
        Self {
            gamma: store.insert(&format!("{name}.gamma"), Tensor::full(&[channels], 1.0), true),
            beta: store.insert(&format!("{name}.beta"), Tensor::zeros(&[channels]), true),
            running_mean: store.insert(
                &format!("{name}.running_mean"),
                Tensor::zeros(&[channels]),
                false,
            ),
            running_var: store.insert(
                &format!("{name}.running_var"),
                Tensor::full(&[channels], 1.0),
                false,
            ),
        }
    }
}

/// A domain adaptive layer: shared standardization followed by the affine
/// map of the selected domain.
#[derive(Clone, Debug, PartialEq)]
pub struct DalBank {
    pub channels: usize,
    pub eps: f64,
    pub domains: Vec<NormParams>,
}

impl DalBank {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, domains: usize, eps: f64) -> Self {
        let domains =
            (0..domains).map(|d| NormParams::new(store, &format!("{name}.d{d}"), channels)).collect();
        Self { channels, eps, domains }
    }
}

fn norm_forward(
    g: &mut Graph,
    store: &ParamStore,
    f: Var,
    p: &NormParams,
    eps: f64,
    ctx: &mut ForwardCtx,
) -> Result<Var> {
    let xhat = match ctx.mode {
        Mode::Train => {
            if g.shape(f)[0] < 2 {
                return Err(validation!("batch statistics need a batch of at least 2"));
            }
            let (xhat, stats) = g.normalize(f, eps);
            ctx.stat_updates.push(StatUpdate { mean: p.running_mean, var: p.running_var, stats });
            xhat
        }
        Mode::Eval => {
            let stats = BatchStats {
                mean: store.get(p.running_mean).data().to_vec(),
                var: store.get(p.running_var).data().to_vec(),
            };
            g.normalize_fixed(f, &stats, eps)
        }
    };
    let gamma = store.var(g, p.gamma);
    let beta = store.var(g, p.beta);
    let scaled = g.mul_channels(xhat, gamma);
    Ok(g.add_channels(scaled, beta))
}

/// `gamma_d * (f - mu_B) / sqrt(var_B + eps) + beta_d` in training mode;
/// domain `d` running statistics replace the batch moments in eval mode.
pub fn dal_forward(
    g: &mut Graph,
    store: &ParamStore,
    f: Var,
    d: usize,
    bank: &DalBank,
    ctx: &mut ForwardCtx,
) -> Result<Var> {
    let p = bank
        .domains
        .get(d)
        .ok_or_else(|| validation!("domain {d} out of range for {} domains", bank.domains.len()))?;
    ctx.dal_lookups += 1;
    norm_forward(g, store, f, p, bank.eps, ctx)
}

#[derive(Clone, Debug, PartialEq)]
pub enum NormSite {
    Shared(NormParams),
    Dal(DalBank),
}

impl NormSite {
    fn new(
        store: &mut ParamStore,
        name: &str,
        channels: usize,
        dal_domains: Option<usize>,
        eps: f64,
    ) -> Self {
        match dal_domains {
            Some(m) => NormSite::Dal(DalBank::new(store, &format!("{name}.dal"), channels, m, eps)),
            None => NormSite::Shared(NormParams::new(store, &format!("{name}.bn"), channels)),
        }
    }

    fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        f: Var,
        domain: Option<usize>,
        eps: f64,
        ctx: &mut ForwardCtx,
    ) -> Result<Var> {
        match self {
            NormSite::Shared(p) => norm_forward(g, store, f, p, eps, ctx),
            NormSite::Dal(bank) => {
                let d = domain.ok_or_else(|| {
                    Error::Contract(String::from("domain adaptive layer reached without a domain"))
                })?;
                dal_forward(g, store, f, d, bank, ctx)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Layer {
    Dense(Linear),
    Conv(Conv2d),
    Block(ResidualBlock),
}

#[derive(Clone, Debug, PartialEq)]
struct ResidualBlock {
    conv1: Conv2d,
    conv2: Conv2d,
    /// Norm after the first conv; the block's own site (`Stage::norm`) sits
    /// after the second conv, before the skip addition.
    inner_norm: NormSite,
    projection: Option<(Conv2d, NormSite)>,
}

#[derive(Clone, Debug, PartialEq)]
struct Stage {
    layer: Layer,
    norm: NormSite,
}

/// Feature extractor shared by both encoder branches.
#[derive(Clone, Debug, PartialEq)]
pub struct Trunk {
    stages: Vec<Stage>,
    image: bool,
    eps: f64,
    slope: f64,
}

/// Normalization-site count of a backbone, in forward order.
pub fn norm_site_count(backbone: &Backbone) -> usize {
    match backbone {
        Backbone::Mlp { hidden } => hidden.len(),
        Backbone::Conv { widths } => widths.len(),
        Backbone::Residual { widths, blocks } => {
            let mut n = 1;
            for (i, &b) in blocks.iter().enumerate() {
                for j in 0..b {
                    n += 2;
                    let downsample = j == 0 && i > 0;
                    let widen = j == 0 && i > 0 && widths[i] != widths[i - 1];
                    if downsample || widen {
                        n += 1;
                    }
                }
            }
            n
        }
    }
}

impl Trunk {
    /// `dal_sites` deepest normalization sites get one parameter set per
    /// domain; the rest are shared.
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        prefix: &str,
        cfg: &EncoderConfig,
        dal_sites: usize,
    ) -> Self {
        let total = norm_site_count(&cfg.backbone);
        let first_dal = total - dal_sites.min(total);
        let mut site = 0usize;
        let mut next_site = |store: &mut ParamStore, name: &str, ch: usize| {
            let dal = (site >= first_dal).then_some(cfg.domains);
            site += 1;
            NormSite::new(store, name, ch, dal, cfg.norm_eps)
        };
        let mut stages = Vec::new();
        match (&cfg.backbone, &cfg.input) {
            (Backbone::Mlp { hidden }, InputShape::Vector { dim }) => {
                let mut inputs = *dim;
                for (i, &h) in hidden.iter().enumerate() {
                    let name = format!("{prefix}.stage{i}");
                    let layer = Layer::Dense(Linear::new(store, rng, &format!("{name}.linear"), inputs, h));
                    let norm = next_site(store, &name, h);
                    stages.push(Stage { layer, norm });
                    inputs = h;
                }
            }
            (Backbone::Conv { widths }, InputShape::Image { channels, .. }) => {
                let mut inputs = *channels;
                for (i, &w) in widths.iter().enumerate() {
                    let name = format!("{prefix}.stage{i}");
                    let conv = Conv { stride: 2, pad: 1 };
                    let layer =
                        Layer::Conv(Conv2d::new(store, rng, &format!("{name}.conv"), inputs, w, 4, conv));
                    let norm = next_site(store, &name, w);
                    stages.push(Stage { layer, norm });
                    inputs = w;
                }
            }
            (Backbone::Residual { widths, blocks }, InputShape::Image { channels, .. }) => {
                let name = format!("{prefix}.stem");
                let stem = Conv2d::new(
                    store,
                    rng,
                    &format!("{name}.conv"),
                    *channels,
                    widths[0],
                    7,
                    Conv { stride: 2, pad: 3 },
                );
                let norm = next_site(store, &name, widths[0]);
                stages.push(Stage { layer: Layer::Conv(stem), norm });
                let mut inputs = widths[0];
                for (i, (&w, &b)) in widths.iter().zip(blocks).enumerate() {
                    for j in 0..b {
                        let name = format!("{prefix}.layer{i}.block{j}");
                        let stride = if j == 0 && i > 0 { 2 } else { 1 };
                        let conv1 = Conv2d::new(
                            store,
                            rng,
                            &format!("{name}.conv1"),
                            inputs,
                            w,
                            3,
                            Conv { stride, pad: 1 },
                        );
                        let inner_norm = next_site(store, &format!("{name}.n1"), w);
                        let conv2 = Conv2d::new(
                            store,
                            rng,
                            &format!("{name}.conv2"),
                            w,
                            w,
                            3,
                            Conv { stride: 1, pad: 1 },
                        );
                        let norm = next_site(store, &format!("{name}.n2"), w);
                        let projection = (stride != 1 || inputs != w).then(|| {
                            let c = Conv2d::new(
                                store,
                                rng,
                                &format!("{name}.proj"),
                                inputs,
                                w,
                                1,
                                Conv { stride, pad: 0 },
                            );
                            (c, next_site(store, &format!("{name}.nproj"), w))
                        });
                        stages.push(Stage {
                            layer: Layer::Block(ResidualBlock { conv1, conv2, inner_norm, projection }),
                            norm,
                        });
                        inputs = w;
                    }
                }
            }
            _ => unreachable!("validated backbone/input pairing"),
        }
        Self {
            stages,
            image: matches!(cfg.input, InputShape::Image { .. }),
            eps: cfg.norm_eps,
            slope: cfg.leaky_slope,
        }
    }

    pub fn dal_banks(&self) -> Vec<&DalBank> {
        let mut sites: Vec<&NormSite> = Vec::new();
        for s in &self.stages {
            if let Layer::Block(b) = &s.layer {
                sites.push(&b.inner_norm);
                sites.push(&s.norm);
                if let Some((_, n)) = &b.projection {
                    sites.push(n);
                }
            } else {
                sites.push(&s.norm);
            }
        }
        sites
            .into_iter()
            .filter_map(|n| match n {
                NormSite::Dal(b) => Some(b),
                NormSite::Shared(_) => None,
            })
            .collect()
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        domain: Option<usize>,
        ctx: &mut ForwardCtx,
    ) -> Result<Var> {
        let mut h = x;
        for stage in &self.stages {
            h = match &stage.layer {
                Layer::Dense(l) => {
                    let y = l.forward(g, store, h);
                    let y = stage.norm.forward(g, store, y, domain, self.eps, ctx)?;
                    g.leaky_relu(y, self.slope)
                }
                Layer::Conv(c) => {
                    let y = c.forward(g, store, h);
                    let y = stage.norm.forward(g, store, y, domain, self.eps, ctx)?;
                    g.leaky_relu(y, self.slope)
                }
                Layer::Block(b) => {
                    let y = b.conv1.forward(g, store, h);
                    let y = b.inner_norm.forward(g, store, y, domain, self.eps, ctx)?;
                    let y = g.leaky_relu(y, self.slope);
                    let y = b.conv2.forward(g, store, y);
                    let y = stage.norm.forward(g, store, y, domain, self.eps, ctx)?;
                    let skip = match &b.projection {
                        Some((c, n)) => {
                            let p = c.forward(g, store, h);
                            n.forward(g, store, p, domain, self.eps, ctx)?
                        }
                        None => h,
                    };
                    let y = g.add(y, skip);
                    g.leaky_relu(y, self.slope)
                }
            };
        }
        Ok(if self.image { g.mean_pool(h) } else { h })
    }
}

fn gaussian_head(g: &mut Graph, store: &ParamStore, head: &Linear, feat: Var) -> Posterior {
    let out = head.forward(g, store, feat);
    let q = head.outputs / 2;
    let mean = g.slice_cols(out, 0, q);
    let raw = g.slice_cols(out, q, 2 * q);
    let log_var = g.clamp(raw, LOG_VAR_MIN, LOG_VAR_MAX);
    Posterior { mean, log_var }
}

/// Output of the relevant branch. `z` is present only in single-branch mode.
#[derive(Clone, Copy, Debug)]
pub struct RelevantOutput {
    pub s: Posterior,
    pub a: Posterior,
    pub z: Option<Posterior>,
}

/// `q(s, a | x)`: a shared trunk with two parallel Gaussian heads on the
/// pooled feature.
#[derive(Clone, Debug, PartialEq)]
pub struct RelevantEncoder {
    pub trunk: Trunk,
    head_s: Linear,
    head_a: Linear,
    head_z: Option<Linear>,
    input: InputShape,
}

impl RelevantEncoder {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        rng: &mut R,
        cfg: &EncoderConfig,
        single_branch: bool,
    ) -> Self {
        let trunk = Trunk::new(store, rng, "relevant", cfg, 0);
        let feat = cfg.backbone.feature_dim(&cfg.input);
        let head_s = Linear::new(store, rng, "relevant.head_s", feat, 2 * cfg.q_s);
        let head_a = Linear::new(store, rng, "relevant.head_a", feat, 2 * cfg.q_a);
        let head_z =
            single_branch.then(|| Linear::new(store, rng, "relevant.head_z", feat, 2 * cfg.q_z));
        Self { trunk, head_s, head_a, head_z, input: cfg.input.clone() }
    }

    pub fn encode(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        ctx: &mut ForwardCtx,
    ) -> Result<RelevantOutput> {
        self.input.check(g.value(x))?;
        let feat = self.trunk.forward(g, store, x, None, ctx)?;
        let s = gaussian_head(g, store, &self.head_s, feat);
        let a = gaussian_head(g, store, &self.head_a, feat);
        let z = self.head_z.as_ref().map(|h| gaussian_head(g, store, h, feat));
        Ok(RelevantOutput { s, a, z })
    }
}

/// Which domain the irrelevant branch should specialize to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainRef {
    Training(usize),
    /// A domain absent at training time; it has no irrelevant encoder.
    Unseen,
}

/// `q(z | x, d)`: a trunk whose deepest normalization sites are domain
/// adaptive layers.
#[derive(Clone, Debug, PartialEq)]
pub struct IrrelevantEncoder {
    pub trunk: Trunk,
    head_z: Linear,
    input: InputShape,
    domains: usize,
}

impl IrrelevantEncoder {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, cfg: &EncoderConfig) -> Self {
        let sites = cfg.dal_ratio.site_count(norm_site_count(&cfg.backbone));
        let trunk = Trunk::new(store, rng, "irrelevant", cfg, sites);
        let feat = cfg.backbone.feature_dim(&cfg.input);
        let head_z = Linear::new(store, rng, "irrelevant.head_z", feat, 2 * cfg.q_z);
        Self { trunk, head_z, input: cfg.input.clone(), domains: cfg.domains }
    }

    pub fn encode(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        domain: DomainRef,
        ctx: &mut ForwardCtx,
    ) -> Result<Posterior> {
        let d = match domain {
            DomainRef::Training(d) if d < self.domains => d,
            DomainRef::Training(d) => {
                return Err(validation!("domain {d} out of range for {} domains", self.domains))
            }
            DomainRef::Unseen => {
                return Err(Error::Contract(String::from(
                    "an unseen domain has no irrelevant encoder",
                )))
            }
        };
        self.input.check(g.value(x))?;
        let feat = self.trunk.forward(g, store, x, Some(d), ctx)?;
        Ok(gaussian_head(g, store, &self.head_z, feat))
    }
}
