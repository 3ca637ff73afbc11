//! The full two-branch model: encoders, priors, decoder, attribute GCN and
//! classifier, wired into the per-domain objective.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::encoders::{
    reparameterize, DomainRef, EncoderConfig, ForwardCtx, GaussianPosterior, IrrelevantEncoder,
    Mode, RelevantEncoder,
};
use crate::error::{config_err, validation, Result};
use crate::gcn::{attribute_logits, AttributeGraph, GcnHead};
use crate::graph::{Graph, Var};
use crate::heads::{
    partial_reconstruction, ClassifierHead, Decoder, DomainEmbedding, DomainPrior, LatentSubset,
    PartialFill,
};
use crate::nn::ParamStore;
use crate::objectives::{
    kl_gaussian, loss_attribute_regression, loss_cls, loss_gcn, loss_rec, DomainTerms, Posterior,
    RecMode,
};
use crate::rng::{stream, tags};
use crate::tensor::Tensor;

/// How attribute targets are scored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttributeKind {
    /// Binary targets; sigmoid of node logits with cross-entropy.
    #[default]
    Binary,
    /// Real-valued targets; node logits are the prediction, squared error.
    Continuous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    /// One branch emits `(s, a, z)` jointly; no domain adaptive layers.
    #[serde(default)]
    pub single_branch: bool,
    pub classes: usize,
    pub prior_hidden: usize,
    #[serde(default)]
    pub domain_embedding: DomainEmbedding,
    pub classifier_hidden: usize,
    /// Hidden widths of the attribute GCN; the last layer maps to `q_a`.
    pub gcn_hidden: Vec<usize>,
    #[serde(default)]
    pub attribute_kind: AttributeKind,
    /// Number of leading graph nodes included in the attribute loss.
    pub scored_attributes: Option<usize>,
    #[serde(default)]
    pub rec_mode: RecMode,
    #[serde(default)]
    pub partial_fill: PartialFill,
    /// Reparameterized samples per step for the attribute and class terms.
    #[serde(default = "one")]
    pub latent_samples: usize,
}

fn one() -> usize {
    1
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.classes < 2 {
            return Err(config_err!("at least two classes are required"));
        }
        if self.latent_samples == 0 {
            return Err(config_err!("latent_samples must be positive"));
        }
        Ok(())
    }

    /// Classifier outputs: one logit for binary tasks, one per class otherwise.
    pub fn classifier_outputs(&self) -> usize {
        if self.classes == 2 {
            1
        } else {
            self.classes
        }
    }
}

/// A minibatch drawn from one training domain.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainBatch {
    pub domain: usize,
    pub x: Tensor,
    /// `[n, c]` attribute targets in graph node order.
    pub attributes: Tensor,
    pub labels: Vec<usize>,
}

/// Class labels as classifier targets.
pub fn label_targets(labels: &[usize], classes: usize) -> Result<Tensor> {
    if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
        return Err(validation!("label {y} out of range for {classes} classes"));
    }
    Ok(if classes == 2 {
        Tensor::new(&[labels.len(), 1], labels.iter().map(|&y| y as f64).collect())
    } else {
        let mut t = Tensor::zeros(&[labels.len(), classes]);
        for (r, &y) in labels.iter().enumerate() {
            t.data_mut()[r * classes + y] = 1.0;
        }
        t
    })
}

/// Posterior means of every branch for one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoded {
    pub s: GaussianPosterior,
    pub a: GaussianPosterior,
    pub z: Option<GaussianPosterior>,
}

/// Relevant-branch predictions for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// `[n, outputs]` class probabilities.
    pub scores: Tensor,
    /// `[n, c]` attribute predictions (probabilities or values).
    pub attributes: Tensor,
}

/// Per-domain forward result.
#[derive(Clone, Copy, Debug)]
pub struct DomainForward {
    pub terms: DomainTerms,
    pub samples: usize,
}

#[derive(Clone, Debug)]
pub struct DimGcn {
    pub config: ModelConfig,
    pub graph: AttributeGraph,
    pub store: ParamStore,
    relevant: RelevantEncoder,
    irrelevant: Option<IrrelevantEncoder>,
    prior: DomainPrior,
    decoder: Decoder,
    gcn: GcnHead,
    classifier: ClassifierHead,
}

impl DimGcn {
    /// Builds the model with parameters initialized from `seed`. The
    /// parameter layout is a pure function of `config` and `graph`.
    pub fn new(config: ModelConfig, graph: AttributeGraph, seed: u64) -> Result<Self> {
        config.validate()?;
        let c = graph.node_count();
        if graph.correlation.shape() != [c, c] || graph.embeddings.dims2().0 != c {
            return Err(config_err!("attribute graph matrices do not match {c} nodes"));
        }
        if let Some(k) = config.scored_attributes {
            if k == 0 || k > c {
                return Err(config_err!("scored_attributes must lie in 1..={c}"));
            }
        }
        let mut rng = stream(seed, tags::INIT);
        let mut store = ParamStore::new();
        let enc = &config.encoder;
        let slope = enc.leaky_slope;
        let relevant = RelevantEncoder::new(&mut store, &mut rng, enc, config.single_branch);
        let irrelevant =
            (!config.single_branch).then(|| IrrelevantEncoder::new(&mut store, &mut rng, enc));
        let prior = DomainPrior::new(
            &mut store,
            &mut rng,
            enc.domains,
            enc.q_z,
            config.prior_hidden,
            config.domain_embedding,
            slope,
        );
        let decoder = Decoder::new(&mut store, &mut rng, enc);
        let gcn = GcnHead::new(
            &mut store,
            &mut rng,
            graph.embeddings.dims2().1,
            &config.gcn_hidden,
            enc.q_a,
            slope,
        );
        let classifier = ClassifierHead::new(
            &mut store,
            &mut rng,
            enc.q_s,
            enc.q_a,
            config.classifier_hidden,
            config.classifier_outputs(),
            slope,
        );
        Ok(Self { config, graph, store, relevant, irrelevant, prior, decoder, gcn, classifier })
    }

    pub fn domains(&self) -> usize {
        self.config.encoder.domains
    }

    pub fn scored_attributes(&self) -> usize {
        self.config.scored_attributes.unwrap_or(self.graph.node_count())
    }

    pub fn relevant(&self) -> &RelevantEncoder {
        &self.relevant
    }

    pub fn irrelevant(&self) -> Option<&IrrelevantEncoder> {
        self.irrelevant.as_ref()
    }

    pub fn prior(&self) -> &DomainPrior {
        &self.prior
    }

    pub fn decoder(&self) -> &Decoder {
        &self.decoder
    }

    pub fn classifier(&self) -> &ClassifierHead {
        &self.classifier
    }

    pub fn gcn(&self) -> &GcnHead {
        &self.gcn
    }

    fn posteriors(
        &self,
        g: &mut Graph,
        x: Var,
        domain: DomainRef,
        ctx: &mut ForwardCtx,
    ) -> Result<(Posterior, Posterior, Posterior)> {
        let rel = self.relevant.encode(g, &self.store, x, ctx)?;
        let z = match (&self.irrelevant, rel.z) {
            (Some(enc), _) => enc.encode(g, &self.store, x, domain, ctx)?,
            (None, Some(z)) => z,
            (None, None) => unreachable!("single-branch encoder always emits z"),
        };
        Ok((rel.s, rel.a, z))
    }

    /// Builds the four loss terms for one domain batch on `g`.
    pub fn domain_terms<R: Rng>(
        &self,
        g: &mut Graph,
        batch: &DomainBatch,
        ctx: &mut ForwardCtx,
        rng: &mut R,
    ) -> Result<DomainForward> {
        let n = self.config.encoder.input.check(&batch.x)?;
        let d = batch.domain;
        if d >= self.domains() {
            return Err(validation!("domain {d} out of range for {} domains", self.domains()));
        }
        let c = self.graph.node_count();
        if batch.attributes.shape() != [n, c] || batch.labels.len() != n {
            return Err(validation!("batch targets do not match {n} samples and {c} attributes"));
        }
        let x = g.constant(batch.x.clone());
        let (s, a, z) = self.posteriors(g, x, DomainRef::Training(d), ctx)?;

        let std_s = Posterior::constant(g, &GaussianPosterior::standard(n, self.config.encoder.q_s));
        let std_a = Posterior::constant(g, &GaussianPosterior::standard(n, self.config.encoder.q_a));
        let pz = self.prior.forward(g, &self.store, &vec![d; n])?;
        let kl_s = kl_gaussian(g, s, std_s);
        let kl_a = kl_gaussian(g, a, std_a);
        let kl_z = kl_gaussian(g, z, pz);
        let kl = g.add(kl_s, kl_a);
        let kl = g.add(kl, kl_z);

        let h = self.gcn.node_features(g, &self.store, &self.graph)?;
        let scored = self.scored_attributes();
        let attr_t = g.constant(batch.attributes.clone());
        let attr_t = if scored < c { g.slice_cols(attr_t, 0, scored) } else { attr_t };
        let cls_t = g.constant(label_targets(&batch.labels, self.config.classes)?);

        let k = self.config.latent_samples;
        let mut rec = None;
        let mut gcn = None;
        let mut cls = None;
        for _ in 0..k {
            let zs = sample(g, z, rng)?;
            let ss = sample(g, s, rng)?;
            let as_ = sample(g, a, rng)?;
            let x_hat = self.decoder.decode(g, &self.store, zs, ss, as_)?;
            let r = loss_rec(g, x, x_hat, self.config.rec_mode);
            let logits = attribute_logits(g, as_, h)?;
            let logits = if scored < c { g.slice_cols(logits, 0, scored) } else { logits };
            let gl = match self.config.attribute_kind {
                AttributeKind::Binary => {
                    let p = g.sigmoid(logits);
                    loss_gcn(g, attr_t, p)
                }
                AttributeKind::Continuous => loss_attribute_regression(g, attr_t, logits),
            };
            let p = self.classifier.classify(g, &self.store, ss, as_)?;
            let cl = loss_cls(g, cls_t, p);
            rec = Some(accumulate(g, rec, r));
            gcn = Some(accumulate(g, gcn, gl));
            cls = Some(accumulate(g, cls, cl));
        }
        let inv = 1.0 / k as f64;
        let rec = g.scale(rec.expect("k >= 1"), inv);
        let gcn = g.scale(gcn.expect("k >= 1"), inv);
        let cls = g.scale(cls.expect("k >= 1"), inv);
        Ok(DomainForward { terms: DomainTerms { kl, rec, gcn, cls }, samples: n })
    }

    /// Posterior parameters in evaluation mode. `z` is computed only for a
    /// training domain; an unseen domain yields `z = None`.
    pub fn encode(&self, x: &Tensor, domain: Option<usize>) -> Result<Encoded> {
        let mut g = Graph::new();
        let mut ctx = ForwardCtx::new(Mode::Eval);
        let xv = g.constant(x.clone());
        let rel = self.relevant.encode(&mut g, &self.store, xv, &mut ctx)?;
        let z = match (domain, &self.irrelevant, rel.z) {
            (None, _, _) => None,
            (Some(d), Some(enc), _) => {
                Some(enc.encode(&mut g, &self.store, xv, DomainRef::Training(d), &mut ctx)?.value(&g))
            }
            (Some(_), None, z) => z.map(|z| z.value(&g)),
        };
        Ok(Encoded { s: rel.s.value(&g), a: rel.a.value(&g), z })
    }

    /// Relevant branch, attribute head and classifier on posterior means.
    /// Never touches a domain adaptive layer; `ctx` records lookups.
    pub fn predict_with(&self, x: &Tensor, ctx: &mut ForwardCtx) -> Result<Prediction> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let rel = self.relevant.encode(&mut g, &self.store, xv, ctx)?;
        let scores = self.classifier.classify(&mut g, &self.store, rel.s.mean, rel.a.mean)?;
        let h = self.gcn.node_features(&mut g, &self.store, &self.graph)?;
        let logits = attribute_logits(&mut g, rel.a.mean, h)?;
        let attrs = match self.config.attribute_kind {
            AttributeKind::Binary => g.sigmoid(logits),
            AttributeKind::Continuous => logits,
        };
        Ok(Prediction { scores: g.value(scores).clone(), attributes: g.value(attrs).clone() })
    }

    pub fn predict(&self, x: &Tensor) -> Result<Prediction> {
        self.predict_with(x, &mut ForwardCtx::new(Mode::Eval))
    }

    /// Decodes posterior means with excluded blocks filled per config.
    pub fn reconstruct(&self, x: &Tensor, domain: usize, which: LatentSubset) -> Result<Tensor> {
        let enc = self.encode(x, Some(domain))?;
        let z = enc.z.expect("training domain yields z");
        let n = z.rows();
        let mut g = Graph::new();
        let latents = [
            g.constant(z.mean),
            g.constant(enc.s.mean),
            g.constant(enc.a.mean),
        ];
        let fill = match self.config.partial_fill {
            PartialFill::Zero => {
                let q = &self.config.encoder;
                [
                    g.constant(Tensor::zeros(&[n, q.q_z])),
                    g.constant(Tensor::zeros(&[n, q.q_s])),
                    g.constant(Tensor::zeros(&[n, q.q_a])),
                ]
            }
            PartialFill::PriorMean => {
                let pz = self.prior.forward(&mut g, &self.store, &vec![domain; n])?;
                let q = &self.config.encoder;
                [
                    pz.mean,
                    g.constant(Tensor::zeros(&[n, q.q_s])),
                    g.constant(Tensor::zeros(&[n, q.q_a])),
                ]
            }
        };
        let out = partial_reconstruction(&mut g, &self.store, &self.decoder, which, latents, fill)?;
        Ok(g.value(out).clone())
    }
}

fn sample<R: Rng>(g: &mut Graph, post: Posterior, rng: &mut R) -> Result<Var> {
    let shape = g.shape(post.mean).to_vec();
    let n: usize = shape.iter().product();
    let noise = Tensor::new(&shape, (0..n).map(|_| StandardNormal.sample(rng)).collect());
    reparameterize(g, post, &noise)
}

fn accumulate(g: &mut Graph, acc: Option<Var>, v: Var) -> Var {
    match acc {
        Some(a) => g.add(a, v),
        None => v,
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::encoders::{Backbone, DalRatio, DomainMechanism, InputShape};

    pub(crate) fn toy_config(domains: usize) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                input: InputShape::Vector { dim: 6 },
                backbone: Backbone::Mlp { hidden: vec![16, 16] },
                q_s: 2,
                q_a: 2,
                q_z: 2,
                dal_ratio: DalRatio::All,
                mechanism: DomainMechanism::Dal,
                domains,
                norm_eps: 1e-5,
                momentum: 0.1,
                leaky_slope: 0.2,
            },
            single_branch: false,
            classes: 2,
            prior_hidden: 8,
            domain_embedding: DomainEmbedding::OneHot,
            classifier_hidden: 8,
            gcn_hidden: vec![8],
            attribute_kind: AttributeKind::Binary,
            scored_attributes: None,
            rec_mode: RecMode::Sum,
            partial_fill: PartialFill::Zero,
            latent_samples: 1,
        }
    }

    fn toy_graph() -> AttributeGraph {
        AttributeGraph::one_hot(
            ["p", "q", "r"].iter().map(|s| (*s).into()).collect(),
            Tensor::identity(3),
        )
    }

    fn batch(domain: usize, n: usize, seed: u64) -> DomainBatch {
        let mut rng = stream(seed, 99);
        let x: Vec<f64> = (0..n * 6).map(|_| StandardNormal.sample(&mut rng)).collect();
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let mut attrs = Tensor::zeros(&[n, 3]);
        for (r, &y) in labels.iter().enumerate() {
            attrs.data_mut()[r * 3 + y] = 1.0;
        }
        DomainBatch { domain, x: Tensor::new(&[n, 6], x), attributes: attrs, labels }
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = DimGcn::new(toy_config(2), toy_graph(), 3).unwrap();
        let b = DimGcn::new(toy_config(2), toy_graph(), 3).unwrap();
        assert_eq!(a.store, b.store);
    }

    #[test]
    fn domain_terms_are_finite_and_nonnegative() {
        let m = DimGcn::new(toy_config(2), toy_graph(), 1).unwrap();
        let mut g = Graph::new();
        let mut ctx = ForwardCtx::new(Mode::Train);
        let mut rng = stream(0, tags::REPARAM);
        let f = m.domain_terms(&mut g, &batch(1, 8, 4), &mut ctx, &mut rng).unwrap();
        for v in [f.terms.kl, f.terms.rec, f.terms.gcn, f.terms.cls] {
            let x = g.value(v).item();
            assert!(x.is_finite() && x >= 0.0);
        }
        assert!(ctx.dal_lookups > 0);
    }

    #[test]
    fn prediction_never_uses_domain_layers() {
        let m = DimGcn::new(toy_config(3), toy_graph(), 1).unwrap();
        let mut ctx = ForwardCtx::new(Mode::Eval);
        let p = m.predict_with(&batch(0, 5, 2).x, &mut ctx).unwrap();
        assert_eq!(ctx.dal_lookups, 0);
        assert_eq!(p.scores.shape(), &[5, 1]);
        assert_eq!(p.attributes.shape(), &[5, 3]);
    }

    #[test]
    fn unseen_domain_has_no_z() {
        let m = DimGcn::new(toy_config(2), toy_graph(), 1).unwrap();
        let e = m.encode(&batch(0, 4, 2).x, None).unwrap();
        assert!(e.z.is_none());
        assert!(m.encode(&batch(0, 4, 2).x, Some(1)).unwrap().z.is_some());
    }

    #[test]
    fn single_branch_builds_without_dal() {
        let mut cfg = toy_config(1);
        cfg.single_branch = true;
        let m = DimGcn::new(cfg, toy_graph(), 1).unwrap();
        assert!(m.irrelevant().is_none());
        assert!(m.store.entries().iter().all(|e| !e.name.contains(".dal.")));
        let mut g = Graph::new();
        let mut ctx = ForwardCtx::new(Mode::Train);
        let mut rng = stream(0, tags::REPARAM);
        m.domain_terms(&mut g, &batch(0, 4, 1), &mut ctx, &mut rng).unwrap();
        assert_eq!(ctx.dal_lookups, 0);
    }

    #[test]
    fn label_targets_layout() {
        assert_eq!(label_targets(&[1, 0], 2).unwrap().data(), &[1.0, 0.0]);
        assert_eq!(label_targets(&[2], 3).unwrap().data(), &[0.0, 0.0, 1.0]);
        assert!(label_targets(&[3], 3).is_err());
    }

    #[test]
    fn full_subset_reconstruction_matches_decode() {
        let m = DimGcn::new(toy_config(2), toy_graph(), 5).unwrap();
        let x = batch(0, 4, 3).x;
        let full = m.reconstruct(&x, 0, LatentSubset::ALL).unwrap();
        let e = m.encode(&x, Some(0)).unwrap();
        let mut g = Graph::new();
        let z = g.constant(e.z.unwrap().mean);
        let s = g.constant(e.s.mean);
        let a = g.constant(e.a.mean);
        let d = m.decoder().decode(&mut g, &m.store, z, s, a).unwrap();
        assert_eq!(g.value(d), &full);
        assert!(m.reconstruct(&x, 0, LatentSubset::default()).is_err());
    }
}
