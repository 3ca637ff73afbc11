//! Synthetic benchmark sampled from the identifiability assumptions:
//! `(s, a) | y` and `z | d` Gaussian, `x = f_x(z, s, a) + e_x` and
//! `A = f_A(a) + e_A` with bijective `f_x`, `f_A`.

pub mod fit;
pub mod mixing;
pub mod spec;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, validation, Result};
use crate::gcn::AttributeGraph;
use crate::rng::{stream, tags};
use crate::tensor::Tensor;
use crate::train::DomainData;

pub use fit::{affine_fit, affine_fit_score, AffineFit};
pub use mixing::{Mixing, MixingConfig};
pub use spec::{
    sample_latents, sufficient_statistics, verify_rank_conditions, Block, GaussianEntry,
    GenerativeSpec, LatentTriple, RankReport, RankVerdict,
};

/// An extra observed channel `strength_d * (y - (K - 1) / 2) + noise`
/// appended to `x`; its class correlation varies by domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpuriousConfig {
    /// One strength per domain, held-out domains included.
    pub strengths: Vec<f64>,
    pub noise: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub q_s: usize,
    pub q_a: usize,
    pub q_z: usize,
    pub classes: usize,
    /// Training domains.
    pub domains: usize,
    /// Extra domains sampled from the same construction, for OOD tests.
    pub held_out_domains: usize,
    pub samples_per_cell: usize,
    /// Class-conditional means of `s` and `a` are uniform in `+-range`.
    pub class_mean_range: f64,
    /// Domain-conditional means of `z` are uniform in `+-range`.
    pub domain_mean_range: f64,
    /// Variances are log-uniform in this interval.
    pub var_range: (f64, f64),
    pub noise_x: f64,
    pub noise_a: f64,
    pub mixing: MixingConfig,
    pub spurious: Option<SpuriousConfig>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            q_s: 2,
            q_a: 2,
            q_z: 2,
            classes: 2,
            domains: 6,
            held_out_domains: 0,
            samples_per_cell: 2000,
            class_mean_range: 1.0,
            domain_mean_range: 1.5,
            var_range: (0.3, 1.5),
            noise_x: 0.05,
            noise_a: 0.05,
            mixing: MixingConfig::default(),
            spurious: None,
        }
    }
}

impl SyntheticConfig {
    pub fn total_domains(&self) -> usize {
        self.domains + self.held_out_domains
    }

    pub fn x_dim(&self) -> usize {
        self.q_s + self.q_a + self.q_z + usize::from(self.spurious.is_some())
    }

    pub fn validate(&self) -> Result<()> {
        if self.q_s == 0 || self.q_a == 0 || self.q_z == 0 {
            return Err(config_err!("latent dimensions must be positive"));
        }
        if self.classes < 2 || self.domains < 1 {
            return Err(config_err!("need at least two classes and one domain"));
        }
        let (lo, hi) = self.var_range;
        if !(lo > 0.0 && hi >= lo) {
            return Err(config_err!("variance range must be positive and ordered"));
        }
        if !(self.noise_x >= 0.0 && self.noise_a >= 0.0) {
            return Err(config_err!("noise scales must be non-negative"));
        }
        if let Some(sp) = &self.spurious {
            if sp.strengths.len() != self.total_domains() {
                return Err(config_err!(
                    "spurious channel needs {} strengths, got {}",
                    self.total_domains(),
                    sp.strengths.len()
                ));
            }
        }
        Ok(())
    }
}

/// The fixed generative process: latent laws plus mixing maps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub config: SyntheticConfig,
    pub seed: u64,
    pub spec: GenerativeSpec,
    pub mix_x: Mixing,
    pub mix_a: Mixing,
}

fn random_entry<R: Rng>(q: usize, range: f64, var: (f64, f64), rng: &mut R) -> GaussianEntry {
    let mean = (0..q).map(|_| rng.random_range(-range..=range)).collect();
    let (lo, hi) = (libm::log(var.0), libm::log(var.1));
    let var = (0..q).map(|_| libm::exp(rng.random_range(lo..=hi))).collect();
    GaussianEntry { mean, var }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDomain {
    pub domain: usize,
    pub held_out: bool,
    pub x: Tensor,
    pub attributes: Tensor,
    pub labels: Vec<usize>,
    pub latents: LatentTriple,
}

impl SyntheticDomain {
    pub fn data(&self) -> DomainData {
        DomainData { x: self.x.clone(), attributes: self.attributes.clone(), labels: self.labels.clone() }
    }
}

impl SyntheticWorld {
    pub fn new(config: SyntheticConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(seed, tags::SPEC);
        let c = &config;
        let s = (0..c.classes).map(|_| random_entry(c.q_s, c.class_mean_range, c.var_range, &mut rng)).collect();
        let a = (0..c.classes).map(|_| random_entry(c.q_a, c.class_mean_range, c.var_range, &mut rng)).collect();
        let z = (0..c.total_domains())
            .map(|_| random_entry(c.q_z, c.domain_mean_range, c.var_range, &mut rng))
            .collect();
        let spec = GenerativeSpec { q_s: c.q_s, q_a: c.q_a, q_z: c.q_z, s, a, z };
        spec.validate()?;
        let mut mrng = stream(seed, tags::MIXING);
        let mix_x = Mixing::random(c.q_s + c.q_a + c.q_z, &c.mixing, &mut mrng)?;
        let mix_a = Mixing::random(c.q_a, &c.mixing, &mut mrng)?;
        Ok(Self { config, seed, spec, mix_x, mix_a })
    }

    /// Observations for given latents: `x = f_x([z, s, a]) + noise_x * e`,
    /// `A = f_A(a) + noise_a * e`, plus the spurious channel when set.
    pub fn observe<R: Rng>(&self, latents: &LatentTriple, domain: usize, labels: &[usize], rng: &mut R) -> Result<(Tensor, Tensor)> {
        let n = latents.rows();
        if labels.len() != n {
            return Err(validation!("{} labels for {n} latent rows", labels.len()));
        }
        let mut x = self.mix_x.forward(&latents.stacked())?;
        add_noise(&mut x, self.config.noise_x, rng);
        let mut attrs = self.mix_a.forward(&latents.a)?;
        add_noise(&mut attrs, self.config.noise_a, rng);
        if let Some(sp) = &self.config.spurious {
            let k = sp.strengths.get(domain).copied().ok_or_else(|| validation!("no spurious strength for domain {domain}"))?;
            let centre = (self.config.classes as f64 - 1.0) / 2.0;
            let col: Vec<f64> = labels
                .iter()
                .map(|&y| {
                    let e: f64 = StandardNormal.sample(rng);
                    k * (y as f64 - centre) + sp.noise * e
                })
                .collect();
            x = Tensor::concat_cols(&[&x, &Tensor::new(&[n, 1], col)]);
        }
        Ok((x, attrs))
    }

    /// `per_cell` samples for every (domain, class) cell, rows shuffled
    /// within each domain.
    pub fn sample(&self, per_cell: usize, seed: u64) -> Result<Vec<SyntheticDomain>> {
        if per_cell == 0 {
            return Err(validation!("samples per cell must be positive"));
        }
        let mut lrng = stream(seed, tags::LATENTS);
        let mut nrng = stream(seed, tags::NOISE);
        let mut srng = stream(seed, tags::SPLIT);
        let k = self.config.classes;
        let mut out = Vec::new();
        for d in 0..self.config.total_domains() {
            let mut parts = Vec::with_capacity(k);
            let mut labels = Vec::with_capacity(k * per_cell);
            for y in 0..k {
                parts.push(sample_latents(&self.spec, y, d, per_cell, &mut lrng)?);
                labels.extend(core::iter::repeat_n(y, per_cell));
            }
            let cat = |f: fn(&LatentTriple) -> &Tensor| -> Tensor {
                let q = f(&parts[0]).dims2().1;
                Tensor::new(&[k * per_cell, q], parts.iter().flat_map(|p| f(p).data().iter().copied()).collect())
            };
            let mut latents = LatentTriple { s: cat(|p| &p.s), a: cat(|p| &p.a), z: cat(|p| &p.z) };
            let mut order: Vec<usize> = (0..labels.len()).collect();
            order.shuffle(&mut srng);
            latents = LatentTriple {
                s: latents.s.select_rows(&order),
                a: latents.a.select_rows(&order),
                z: latents.z.select_rows(&order),
            };
            let labels: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
            let (x, attributes) = self.observe(&latents, d, &labels, &mut nrng)?;
            out.push(SyntheticDomain { domain: d, held_out: d >= self.config.domains, x, attributes, labels, latents });
        }
        Ok(out)
    }

    /// Graph over the continuous attribute channels: one node per channel,
    /// self-loops only.
    pub fn attribute_graph(&self) -> AttributeGraph {
        let q = self.config.q_a;
        AttributeGraph::one_hot((0..q).map(|i| alloc::format!("A{i}")).collect(), Tensor::identity(q))
    }

    pub fn rank_report(&self) -> Result<RankReport> {
        verify_rank_conditions(&self.spec, self.config.domains, self.config.classes)
    }
}

fn add_noise<R: Rng>(t: &mut Tensor, scale: f64, rng: &mut R) {
    if scale == 0.0 {
        return;
    }
    for v in t.data_mut() {
        let e: f64 = StandardNormal.sample(rng);
        *v += scale * e;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub world: SyntheticWorld,
    pub domains: Vec<SyntheticDomain>,
}

impl SyntheticDataset {
    pub fn training(&self) -> impl Iterator<Item = &SyntheticDomain> {
        self.domains.iter().filter(|d| !d.held_out)
    }

    pub fn held_out(&self) -> impl Iterator<Item = &SyntheticDomain> {
        self.domains.iter().filter(|d| d.held_out)
    }

    pub fn training_data(&self) -> Vec<DomainData> {
        self.training().map(SyntheticDomain::data).collect()
    }

    /// Text manifest: seed, dimensions and every natural-parameter table.
    pub fn manifest(&self) -> String {
        let w = &self.world;
        let c = &w.config;
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", w.seed);
        let _ = writeln!(s, "q_s = {}\nq_a = {}\nq_z = {}", c.q_s, c.q_a, c.q_z);
        let _ = writeln!(s, "classes = {}\ndomains = {}\nheld_out_domains = {}", c.classes, c.domains, c.held_out_domains);
        let _ = writeln!(s, "samples_per_cell = {}", c.samples_per_cell);
        let _ = writeln!(s, "noise_x = {}\nnoise_a = {}", c.noise_x, c.noise_a);
        let _ = writeln!(s, "mixing_stages = {}\nmixing_alpha = {}", c.mixing.stages, c.mixing.alpha);
        let _ = writeln!(s, "sufficient_statistics = [u, u^2]");
        for b in Block::ALL {
            let cond = if b == Block::Z { "d" } else { "y" };
            for (i, e) in w.spec.entries(b).iter().enumerate() {
                let _ = writeln!(s, "gamma.{}[{cond}={i}].mean = {:?}", b.name(), e.mean);
                let _ = writeln!(s, "gamma.{}[{cond}={i}].var = {:?}", b.name(), e.var);
                if let Ok(eta) = e.natural() {
                    let _ = writeln!(s, "gamma.{}[{cond}={i}].eta1 = {:?}", b.name(), eta.row(0));
                    let _ = writeln!(s, "gamma.{}[{cond}={i}].eta2 = {:?}", b.name(), eta.row(1));
                }
            }
        }
        s
    }
}

/// World from `(config, seed)` and `config.samples_per_cell` samples.
pub fn generate_dataset(config: &SyntheticConfig, seed: u64) -> Result<SyntheticDataset> {
    let world = SyntheticWorld::new(config.clone(), seed)?;
    let domains = world.sample(config.samples_per_cell, seed)?;
    Ok(SyntheticDataset { world, domains })
}

/// Latents recovered through the stored inverse of `f_x` (noise-free
/// data only), split as `(z, s, a)`.
pub fn invert_observation(world: &SyntheticWorld, x: &Tensor) -> Result<LatentTriple> {
    let c = &world.config;
    let core = c.q_s + c.q_a + c.q_z;
    let x = if x.dims2().1 > core { x.slice_cols(0, core) } else { x.clone() };
    let u = world.mix_x.inverse(&x)?;
    Ok(LatentTriple {
        z: u.slice_cols(0, c.q_z),
        s: u.slice_cols(c.q_z, c.q_z + c.q_s),
        a: u.slice_cols(c.q_z + c.q_s, core),
    })
}
