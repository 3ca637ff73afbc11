//! Multi-domain training loop and evaluation.

use alloc::vec::Vec;

use rand::seq::index::sample as sample_indices;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::encoders::{ForwardCtx, Mode};
use crate::error::{config_err, validation, Error, Result};
use crate::graph::Graph;
use crate::metrics::{evaluate_attributes, macro_auc, AttributeAccuracy};
use crate::model::{AttributeKind, DimGcn, DomainBatch};
use crate::nn::{Adam, AdamConfig, ParamStore};
use crate::objectives::{total_loss, variance_regularizer_value, DomainLossBreakdown, LossWeights};
use crate::rng::{stream, tags, Rng};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub beta: f64,
    pub optimizer: AdamConfig,
    pub seed: u64,
    pub weights: LossWeights,
    /// Random horizontal flips of image inputs.
    pub flip: bool,
    /// Validation interval in steps; 0 disables model selection.
    pub eval_every: usize,
    /// Interval at which step records are kept in the returned history.
    pub log_every: usize,
    /// Global gradient-norm clip; `None` leaves gradients untouched.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            batch_size: 32,
            beta: 1.0,
            optimizer: AdamConfig::default(),
            seed: 0,
            weights: LossWeights::default(),
            flip: true,
            eval_every: 0,
            log_every: 1,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) {
            return Err(config_err!("beta must be non-negative"));
        }
        if self.batch_size < 2 {
            return Err(config_err!("batch_size must be at least 2 for batch statistics"));
        }
        if !(self.optimizer.learning_rate > 0.0) {
            return Err(config_err!("learning rate must be positive"));
        }
        Ok(())
    }
}

/// All samples of one domain (or an evaluation set).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainData {
    pub x: Tensor,
    pub attributes: Tensor,
    pub labels: Vec<usize>,
}

impl DomainData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(rows),
            attributes: self.attributes.select_rows(rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }

    /// Concatenates several sets row-wise.
    pub fn concat(parts: &[&DomainData]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| validation!("nothing to concatenate"))?;
        let mut x = Vec::new();
        let mut attributes = Vec::new();
        let mut labels = Vec::new();
        for p in parts {
            if p.x.shape()[1..] != first.x.shape()[1..] || p.attributes.shape()[1..] != first.attributes.shape()[1..] {
                return Err(validation!("cannot concatenate sets of different shapes"));
            }
            x.extend_from_slice(p.x.data());
            attributes.extend_from_slice(p.attributes.data());
            labels.extend_from_slice(&p.labels);
        }
        let mut xs = first.x.shape().to_vec();
        xs[0] = labels.len();
        let mut ashape = first.attributes.shape().to_vec();
        ashape[0] = labels.len();
        Ok(Self { x: Tensor::new(&xs, x), attributes: Tensor::new(&ashape, attributes), labels })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub domains: Vec<DomainLossBreakdown>,
    pub l_var: f64,
    pub total: f64,
}

/// Flips the last axis of every selected sample of an `[n, c, h, w]` batch.
pub fn flip_horizontal(x: &mut Tensor, which: &[bool]) {
    let shape = x.shape().to_vec();
    if shape.len() != 4 {
        return;
    }
    let w = shape[3];
    let per = shape[1] * shape[2] * shape[3];
    let data = x.data_mut();
    for (i, &f) in which.iter().enumerate() {
        if f {
            for row in data[i * per..(i + 1) * per].chunks_mut(w) {
                row.reverse();
            }
        }
    }
}

pub struct Trainer {
    pub model: DimGcn,
    pub config: TrainConfig,
    adam: Adam,
    step: usize,
    batch_rng: Rng,
    reparam_rng: Rng,
    augment_rng: Rng,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    pub history: Vec<StepRecord>,
    pub last: Option<StepRecord>,
    pub best_step: Option<usize>,
    pub best_validation_auc: Option<f64>,
}

impl Trainer {
    pub fn new(model: DimGcn, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if model.domains() < 2 && !model.config.single_branch {
            return Err(config_err!("two or more training domains are required unless single_branch is set"));
        }
        let seed = config.seed;
        Ok(Self {
            model,
            adam: Adam::new(config.optimizer),
            config,
            step: 0,
            batch_rng: stream(seed, tags::BATCH),
            reparam_rng: stream(seed, tags::REPARAM),
            augment_rng: stream(seed, tags::AUGMENT),
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Draws one batch from every domain, in domain order.
    pub fn sample_batches(&mut self, data: &[DomainData]) -> Result<Vec<DomainBatch>> {
        if data.len() != self.model.domains() {
            return Err(validation!("{} domain sets for {} training domains", data.len(), self.model.domains()));
        }
        let image = self.model.config.encoder.input.batch_shape(1).len() == 4;
        let mut out = Vec::with_capacity(data.len());
        for (d, set) in data.iter().enumerate() {
            if set.len() < 2 {
                return Err(validation!("domain {d} has fewer than two training samples"));
            }
            let n = self.config.batch_size.min(set.len());
            let rows = sample_indices(&mut self.batch_rng, set.len(), n).into_vec();
            let mut b = set.select(&rows);
            if self.config.flip && image {
                let which: Vec<bool> = (0..n).map(|_| self.augment_rng.random_bool(0.5)).collect();
                flip_horizontal(&mut b.x, &which);
            }
            out.push(DomainBatch { domain: d, x: b.x, attributes: b.attributes, labels: b.labels });
        }
        Ok(out)
    }

    /// One optimizer update from exactly one batch per training domain.
    /// A non-finite loss or gradient leaves the parameters untouched.
    pub fn step_on(&mut self, batches: &[DomainBatch]) -> Result<StepRecord> {
        let m = self.model.domains();
        let mut seen: Vec<bool> = alloc::vec![false; m];
        for b in batches {
            if b.domain >= m || core::mem::replace(&mut seen[b.domain], true) {
                return Err(validation!("each step needs exactly one batch per domain"));
            }
        }
        if batches.len() != m {
            return Err(validation!("each step needs exactly one batch per domain"));
        }
        let step = self.step;
        let mut g = Graph::new();
        let mut ctx = ForwardCtx::new(Mode::Train);
        let mut terms = Vec::with_capacity(m);
        let mut breakdowns = Vec::with_capacity(m);
        for b in batches {
            let f = self.model.domain_terms(&mut g, b, &mut ctx, &mut self.reparam_rng)?;
            breakdowns.push(f.terms.breakdown(&g, f.samples));
            terms.push(f.terms);
        }
        let loss = total_loss(&mut g, &terms, self.config.beta, &self.config.weights)?;
        let total = g.value(loss).item();
        if !total.is_finite() {
            return Err(Error::Diverged { step });
        }
        let grads = g.backward(loss);
        let mut params: Vec<_> = grads.params(&g).map(|(id, t)| (id, t.clone())).collect();
        let sq: f64 = params.iter().flat_map(|(_, t)| t.data()).map(|v| v * v).sum();
        if !sq.is_finite() {
            return Err(Error::Diverged { step });
        }
        if let Some(c) = self.config.clip_norm {
            let norm = libm::sqrt(sq);
            if norm > c {
                let k = c / norm;
                for (_, t) in &mut params {
                    t.data_mut().iter_mut().for_each(|v| *v *= k);
                }
            }
        }
        self.adam.update(&mut self.model.store, params.iter().map(|(id, t)| (*id, t)));
        ctx.apply_stat_updates(&mut self.model.store, self.model.config.encoder.momentum);
        self.step += 1;
        let l_var = if m >= 2 {
            let gcn: Vec<f64> = breakdowns.iter().map(|b| b.gcn).collect();
            let cls: Vec<f64> = breakdowns.iter().map(|b| b.cls).collect();
            variance_regularizer_value(&gcn, &cls)?
        } else {
            0.0
        };
        Ok(StepRecord { step, domains: breakdowns, l_var, total })
    }

    pub fn step(&mut self, data: &[DomainData]) -> Result<StepRecord> {
        let batches = self.sample_batches(data)?;
        self.step_on(&batches)
    }

    /// Runs the configured number of steps. With a validation set and
    /// `eval_every > 0`, the parameters with the best validation AUC are
    /// restored at the end.
    pub fn fit(
        &mut self,
        data: &[DomainData],
        validation: Option<&DomainData>,
        mut on_step: impl FnMut(&StepRecord),
    ) -> Result<FitOutcome> {
        let mut history = Vec::new();
        let mut last = None;
        let mut best: Option<(f64, usize, ParamStore)> = None;
        let log_every = self.config.log_every.max(1);
        for _ in 0..self.config.steps {
            let rec = self.step(data)?;
            on_step(&rec);
            if rec.step % log_every == 0 {
                history.push(rec.clone());
            }
            if let (Some(v), true) = (validation, self.config.eval_every > 0) {
                if self.step % self.config.eval_every == 0 || self.step == self.config.steps {
                    let auc = evaluate(&self.model, v)?.auc;
                    if best.as_ref().is_none_or(|(b, _, _)| auc > *b) {
                        best = Some((auc, self.step, self.model.store.clone()));
                    }
                }
            }
            last = Some(rec);
        }
        let (best_validation_auc, best_step) = match best {
            Some((auc, step, store)) => {
                self.model.store = store;
                (Some(auc), Some(step))
            }
            None => (None, None),
        };
        Ok(FitOutcome { history, last, best_step, best_validation_auc })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub auc: f64,
    /// Present for binary attribute graphs.
    pub attributes: Option<AttributeAccuracy>,
    pub scores: Tensor,
}

const EVAL_CHUNK: usize = 256;

/// Class scores and attribute predictions through the relevant branch
/// only, in chunks. Fails if any domain adaptive layer is consulted.
pub fn predict_relevant(model: &DimGcn, x: &Tensor) -> Result<(Tensor, Tensor)> {
    let n = x.shape()[0];
    let mut scores = Vec::new();
    let mut attrs = Vec::new();
    let mut ctx = ForwardCtx::new(Mode::Eval);
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_CHUNK).min(n);
        let rows: Vec<usize> = (start..end).collect();
        let p = model.predict_with(&x.select_rows(&rows), &mut ctx)?;
        scores.extend_from_slice(p.scores.data());
        attrs.extend_from_slice(p.attributes.data());
        start = end;
    }
    if ctx.dal_lookups != 0 {
        return Err(Error::Contract(alloc::format!(
            "relevant-branch evaluation consulted {} domain adaptive layers",
            ctx.dal_lookups
        )));
    }
    let k = scores.len() / n.max(1);
    let c = attrs.len() / n.max(1);
    Ok((Tensor::new(&[n, k], scores), Tensor::new(&[n, c], attrs)))
}

/// AUC and attribute accuracy of the relevant branch and classifier. This
/// is also the unseen-domain path: no domain index is requested.
pub fn evaluate(model: &DimGcn, data: &DomainData) -> Result<EvalReport> {
    let (scores, attrs) = predict_relevant(model, &data.x)?;
    let auc = macro_auc(&scores, &data.labels)?;
    let attributes = match model.config.attribute_kind {
        AttributeKind::Binary => {
            let k = model.scored_attributes();
            let cols: Vec<usize> = (0..k).collect();
            let pick = |t: &Tensor| t.transpose().select_rows(&cols).transpose();
            Some(evaluate_attributes(&pick(&attrs), &pick(&data.attributes), 0.5)?)
        }
        AttributeKind::Continuous => None,
    };
    Ok(EvalReport { samples: data.len(), auc, attributes, scores })
}

/// Evaluation on a domain absent at training time.
pub fn eval_ood(model: &DimGcn, data: &DomainData) -> Result<EvalReport> {
    evaluate(model, data)
}
