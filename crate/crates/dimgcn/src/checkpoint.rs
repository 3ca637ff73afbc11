//! Versioned JSON checkpoints: config snapshot, attribute vocabulary,
//! correlation matrix and every named parameter tensor.

use std::fs;
use std::path::Path;

use dimgcn_core::encoders::DalRatio;
use dimgcn_core::gcn::AttributeGraph;
use dimgcn_core::model::DimGcn;
use dimgcn_core::nn::ParamStore;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{format_err, io_err, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub step: usize,
    /// Training domains; per-domain banks are named `<site>.dal.d<domain>.*`.
    pub domains: usize,
    pub dal_ratio: DalRatio,
    pub config: RunConfig,
    pub graph: AttributeGraph,
    pub parameters: Vec<ParamManifestEntry>,
    pub store: ParamStore,
}

impl Checkpoint {
    pub fn capture(config: &RunConfig, model: &DimGcn, step: usize) -> Self {
        let parameters = model
            .store
            .entries()
            .iter()
            .map(|e| ParamManifestEntry { name: e.name.clone(), shape: e.value.shape().to_vec(), trainable: e.trainable })
            .collect();
        Self {
            version: CHECKPOINT_VERSION,
            step,
            domains: model.domains(),
            dal_ratio: model.config.encoder.dal_ratio,
            config: RunConfig { model: model.config.clone(), ..config.clone() },
            graph: model.graph.clone(),
            parameters,
            store: model.store.clone(),
        }
    }

    /// Rebuilds the model and loads every parameter by name.
    pub fn restore(&self) -> Result<DimGcn> {
        let mut store = self.store.clone();
        store.reindex();
        let mut model = DimGcn::new(self.config.model.clone(), self.graph.clone(), self.config.train.seed)?;
        if model.store.len() != store.len() {
            return Err(format_err!(
                "checkpoint holds {} tensors, model layout expects {}",
                store.len(),
                model.store.len()
            ));
        }
        model.store.load_from(&store)?;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut ck: Self = serde_json::from_str(text)?;
        ck.store.reindex();
        if ck.version != CHECKPOINT_VERSION {
            return Err(format_err!("unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})", ck.version));
        }
        for (m, e) in ck.parameters.iter().zip(ck.store.entries()) {
            if m.name != e.name || m.shape != e.value.shape() {
                return Err(format_err!("parameter manifest disagrees with stored tensor {}", e.name));
            }
        }
        if ck.parameters.len() != ck.store.len() {
            return Err(format_err!("parameter manifest lists {} tensors, {} stored", ck.parameters.len(), ck.store.len()));
        }
        Ok(ck)
    }

    /// Writes through a temporary file so a crash never leaves a partial
    /// checkpoint behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, self.to_json()?).map_err(io_err(&tmp))?;
        fs::rename(&tmp, path).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).map_err(io_err(path))?)
    }
}
