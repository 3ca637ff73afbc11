//! End-to-end operations behind the command line: data preparation,
//! training with logs and checkpoints, evaluation and disentanglement.

use std::path::{Path, PathBuf};

use dimgcn_core::disentangle::{disentangle_report, DisentanglementReport};
use dimgcn_core::gcn::{build_correlation_matrix, AttributeGraph};
use dimgcn_core::ingest::Split;
use dimgcn_core::model::DimGcn;
use dimgcn_core::synth::{SyntheticConfig, SyntheticDomain, SyntheticWorld};
use dimgcn_core::train::{evaluate, DomainData, EvalReport, StepRecord, Trainer};
use dimgcn_core::Error as CoreError;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::config::{DataConfig, RunConfig};
use crate::error::{format_err, Error, Result};
use crate::logs::StepLog;
use crate::manifest::ManifestSet;

/// Seed offsets of the evaluation and validation draws of a synthetic world.
pub const EVAL_SEED_OFFSET: u64 = 0x5EED_0001;
pub const VALIDATION_SEED_OFFSET: u64 = 0x5EED_0002;

pub struct PreparedData {
    pub graph: AttributeGraph,
    pub train: Vec<DomainData>,
    pub validation: Option<DomainData>,
}

fn image_side(cfg: &RunConfig) -> Result<usize> {
    match cfg.model.encoder.input {
        dimgcn_core::encoders::InputShape::Image { channels: 1, height, width } if height == width => Ok(height),
        ref other => Err(format_err!("manifest data needs square single-channel image input, got {other:?}")),
    }
}

fn concat(parts: &[DomainData]) -> Result<DomainData> {
    Ok(DomainData::concat(&parts.iter().collect::<Vec<_>>())?)
}

fn synthetic_world(synthetic: &SyntheticConfig, seed: u64) -> Result<SyntheticWorld> {
    Ok(SyntheticWorld::new(synthetic.clone(), seed)?)
}

/// Training domains, the attribute graph and, when model selection is on,
/// a validation set.
pub fn prepare_data(cfg: &RunConfig) -> Result<PreparedData> {
    cfg.validate()?;
    let want_val = cfg.train.eval_every > 0;
    match &cfg.data {
        DataConfig::Synthetic { seed, synthetic, eval_per_cell } => {
            let world = synthetic_world(synthetic, *seed)?;
            let train = world
                .sample(synthetic.samples_per_cell, *seed)?
                .into_iter()
                .filter(|d| !d.held_out)
                .map(|d| d.data())
                .collect();
            let validation = if want_val {
                let v = world.sample(*eval_per_cell, seed.wrapping_add(VALIDATION_SEED_OFFSET))?;
                Some(concat(&v.iter().filter(|d| !d.held_out).map(SyntheticDomain::data).collect::<Vec<_>>())?)
            } else {
                None
            };
            Ok(PreparedData { graph: world.attribute_graph(), train, validation })
        }
        DataConfig::Manifest { manifests, train_datasets, correlation } => {
            let side = image_side(cfg)?;
            let set = ManifestSet::load(manifests)?;
            let train = train_datasets
                .iter()
                .map(|name| set.domain_data(name, Split::Train, side))
                .collect::<Result<Vec<_>>>()?;
            let all = concat(&train)?;
            let b = build_correlation_matrix(&all.attributes, correlation)?;
            let validation = if want_val {
                let parts = train_datasets
                    .iter()
                    .map(|name| set.domain_data(name, Split::Val, side))
                    .collect::<Result<Vec<_>>>()?;
                Some(concat(&parts)?)
            } else {
                None
            };
            if let Some(v) = &validation {
                let classes: std::collections::BTreeSet<usize> = v.labels.iter().copied().collect();
                if classes.len() < 2 {
                    return Err(format_err!(
                        "validation split holds a single class; set train.eval_every = 0 or use more cases"
                    ));
                }
            }
            Ok(PreparedData { graph: AttributeGraph::mammography(b.matrix), train, validation })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: usize,
    pub first: Option<StepRecord>,
    pub last: Option<StepRecord>,
    pub best_step: Option<usize>,
    pub best_validation_auc: Option<f64>,
    pub checkpoint: PathBuf,
}

/// Trains per config, writing `steps.jsonl`, `checkpoint.json` (best or
/// final parameters), optional `checkpoint_<step>.json` snapshots and
/// `config.toml` into `out`. On divergence the last good parameters are
/// saved to `checkpoint_last_good.json` before the error is returned.
pub fn train(cfg: &RunConfig, out: &Path, mut on_step: impl FnMut(&StepRecord)) -> Result<TrainSummary> {
    let data = prepare_data(cfg)?;
    std::fs::create_dir_all(out).map_err(crate::error::io_err(out))?;
    let cfg_path = out.join("config.toml");
    std::fs::write(&cfg_path, cfg.to_toml()?).map_err(crate::error::io_err(&cfg_path))?;
    let model = DimGcn::new(cfg.model.clone(), data.graph, cfg.train.seed)?;
    let mut trainer = Trainer::new(model, cfg.train.clone())?;
    let mut log = StepLog::create(&out.join("steps.jsonl"))?;
    let log_every = cfg.train.log_every.max(1);
    let mut first = None;
    let mut last = None;
    let mut best: Option<(f64, usize, dimgcn_core::nn::ParamStore)> = None;
    for _ in 0..cfg.train.steps {
        let rec = match trainer.step(&data.train) {
            Ok(r) => r,
            Err(CoreError::Diverged { step }) => {
                log.flush()?;
                let path = out.join("checkpoint_last_good.json");
                Checkpoint::capture(cfg, &trainer.model, step).save(&path)?;
                return Err(Error::Diverged { step, checkpoint: path });
            }
            Err(e) => return Err(e.into()),
        };
        on_step(&rec);
        let done = trainer.steps_taken();
        if rec.step % log_every == 0 || done == cfg.train.steps {
            log.append(&rec)?;
        }
        if cfg.output.checkpoint_every > 0 && done % cfg.output.checkpoint_every == 0 {
            Checkpoint::capture(cfg, &trainer.model, done).save(&out.join(format!("checkpoint_{done:06}.json")))?;
        }
        if let (Some(v), true) = (&data.validation, cfg.train.eval_every > 0) {
            if done % cfg.train.eval_every == 0 || done == cfg.train.steps {
                let auc = evaluate(&trainer.model, v)?.auc;
                if best.as_ref().is_none_or(|(b, _, _)| auc > *b) {
                    best = Some((auc, done, trainer.model.store.clone()));
                }
            }
        }
        first.get_or_insert_with(|| rec.clone());
        last = Some(rec);
    }
    log.flush()?;
    let (best_validation_auc, best_step) = match best {
        Some((auc, step, store)) => {
            trainer.model.store = store;
            (Some(auc), Some(step))
        }
        None => (None, None),
    };
    let path = out.join("checkpoint.json");
    Checkpoint::capture(cfg, &trainer.model, best_step.unwrap_or(trainer.steps_taken())).save(&path)?;
    Ok(TrainSummary { steps: trainer.steps_taken(), first, last, best_step, best_validation_auc, checkpoint: path })
}

/// Synthetic evaluation draws: fresh samples of every domain.
pub fn synthetic_eval_domains(cfg: &RunConfig) -> Result<Vec<SyntheticDomain>> {
    match &cfg.data {
        DataConfig::Synthetic { seed, synthetic, eval_per_cell } => {
            let world = synthetic_world(synthetic, *seed)?;
            Ok(world.sample(*eval_per_cell, seed.wrapping_add(EVAL_SEED_OFFSET))?)
        }
        DataConfig::Manifest { .. } => Err(format_err!("run does not use synthetic data")),
    }
}

/// Resolves an evaluation set by name.
///
/// Synthetic runs: `train-domains` (fresh samples of every training
/// domain), `held-out` (every held-out domain) or `domain-<d>`.
/// Manifest runs: a dataset name, evaluated on its test split, optionally
/// suffixed `:train` / `:val` / `:test`.
pub fn eval_dataset(cfg: &RunConfig, name: &str) -> Result<DomainData> {
    match &cfg.data {
        DataConfig::Synthetic { .. } => {
            let domains = synthetic_eval_domains(cfg)?;
            let pick: Vec<DomainData> = match name {
                "train-domains" => domains.iter().filter(|d| !d.held_out).map(SyntheticDomain::data).collect(),
                "held-out" => domains.iter().filter(|d| d.held_out).map(SyntheticDomain::data).collect(),
                other => {
                    let d: usize = other
                        .strip_prefix("domain-")
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| format_err!("unknown synthetic dataset {other:?}; use train-domains, held-out or domain-<d>"))?;
                    vec![domains.get(d).ok_or_else(|| format_err!("no domain {d}"))?.data()]
                }
            };
            if pick.is_empty() {
                return Err(format_err!("dataset {name:?} is empty for this config"));
            }
            concat(&pick)
        }
        DataConfig::Manifest { manifests, .. } => {
            let (dataset, split) = match name.rsplit_once(':') {
                Some((d, s)) => {
                    (d, Split::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| format_err!("unknown split {s:?}"))?)
                }
                None => (name, Split::Test),
            };
            ManifestSet::load(manifests)?.domain_data(dataset, split, image_side(cfg)?)
        }
    }
}

pub fn eval_checkpoint(ck: &Checkpoint, dataset: &str) -> Result<EvalReport> {
    let model = ck.restore()?;
    let data = eval_dataset(&ck.config, dataset)?;
    Ok(evaluate(&model, &data)?)
}

/// Disentanglement scores on fresh samples of the training domains.
pub fn disentangle_checkpoint(ck: &Checkpoint) -> Result<DisentanglementReport> {
    let model = ck.restore()?;
    let domains = synthetic_eval_domains(&ck.config)?;
    let refs: Vec<&SyntheticDomain> = domains.iter().filter(|d| !d.held_out).collect();
    let mut rep = disentangle_report(&model, &refs)?;
    if let DataConfig::Synthetic { seed, synthetic, .. } = &ck.config.data {
        rep.rank = Some(synthetic_world(synthetic, *seed)?.rank_report()?);
    }
    Ok(rep)
}
