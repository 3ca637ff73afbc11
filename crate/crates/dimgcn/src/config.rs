//! Run configuration files (TOML).

use std::path::{Path, PathBuf};

use dimgcn_core::encoders::{Backbone, DalRatio, DomainMechanism, EncoderConfig, InputShape};
use dimgcn_core::gcn::CorrelationConfig;
use dimgcn_core::heads::{DomainEmbedding, PartialFill};
use dimgcn_core::model::{AttributeKind, ModelConfig};
use dimgcn_core::nn::AdamConfig;
use dimgcn_core::objectives::RecMode;
use dimgcn_core::synth::SyntheticConfig;
use dimgcn_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{format_err, io_err, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataConfig {
    /// Generated in memory from `(synthetic, seed)`.
    Synthetic {
        seed: u64,
        #[serde(default)]
        synthetic: SyntheticConfig,
        /// Fresh samples per (domain, class) cell for evaluation sets.
        #[serde(default = "default_eval_per_cell")]
        eval_per_cell: usize,
    },
    /// Patch manifests written by `prepare-ddsm`.
    Manifest {
        manifests: Vec<PathBuf>,
        /// Datasets trained on, in domain order.
        train_datasets: Vec<String>,
        #[serde(default)]
        correlation: CorrelationConfig,
    },
}

fn default_eval_per_cell() -> usize {
    500
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Intermediate checkpoint interval in steps; 0 writes only the final one.
    pub checkpoint_every: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("runs/default"), checkpoint_every: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    /// Desk-scale synthetic run: five classes, six domains, MLP encoders.
    pub fn synthetic_default() -> Self {
        let synthetic = SyntheticConfig { classes: 5, ..SyntheticConfig::default() };
        let model = ModelConfig {
            encoder: EncoderConfig {
                input: InputShape::Vector { dim: synthetic.x_dim() },
                backbone: Backbone::Mlp { hidden: vec![32; 3] },
                q_s: synthetic.q_s,
                q_a: synthetic.q_a,
                q_z: synthetic.q_z,
                dal_ratio: DalRatio::All,
                mechanism: DomainMechanism::Dal,
                domains: synthetic.domains,
                norm_eps: 1e-5,
                momentum: 0.1,
                leaky_slope: 0.2,
            },
            single_branch: false,
            classes: synthetic.classes,
            prior_hidden: 32,
            domain_embedding: DomainEmbedding::OneHot,
            classifier_hidden: 32,
            gcn_hidden: vec![16],
            attribute_kind: AttributeKind::Continuous,
            scored_attributes: None,
            rec_mode: RecMode::Sum,
            partial_fill: PartialFill::Zero,
            latent_samples: 1,
        };
        let train = TrainConfig {
            steps: 3000,
            batch_size: 64,
            optimizer: AdamConfig { learning_rate: 1e-3, ..AdamConfig::default() },
            flip: false,
            log_every: 100,
            ..TrainConfig::default()
        };
        Self {
            data: DataConfig::Synthetic { seed: 0, synthetic, eval_per_cell: default_eval_per_cell() },
            model,
            train,
            output: OutputConfig::default(),
        }
    }

    /// Mammography patches: toy convolutional backbone on 224x224 grey
    /// patches, twelve-node attribute graph.
    pub fn image_default() -> Self {
        let model = ModelConfig {
            encoder: EncoderConfig {
                input: InputShape::Image { channels: 1, height: 224, width: 224 },
                backbone: Backbone::toy_conv(),
                q_s: 16,
                q_a: 16,
                q_z: 16,
                dal_ratio: DalRatio::All,
                mechanism: DomainMechanism::Dal,
                domains: 1,
                norm_eps: 1e-5,
                momentum: 0.1,
                leaky_slope: 0.2,
            },
            single_branch: false,
            classes: 2,
            prior_hidden: 64,
            domain_embedding: DomainEmbedding::OneHot,
            classifier_hidden: 64,
            gcn_hidden: vec![32],
            attribute_kind: AttributeKind::Binary,
            scored_attributes: None,
            rec_mode: RecMode::PerElementMean,
            partial_fill: PartialFill::Zero,
            latent_samples: 1,
        };
        Self {
            data: DataConfig::Manifest {
                manifests: vec![PathBuf::from("patches/manifest.csv")],
                train_datasets: vec!["ddsm".into()],
                correlation: CorrelationConfig::default(),
            },
            model,
            train: TrainConfig { eval_every: 500, log_every: 10, ..TrainConfig::default() },
            output: OutputConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        match &self.data {
            DataConfig::Synthetic { synthetic, eval_per_cell, .. } => {
                synthetic.validate()?;
                let e = &self.model.encoder;
                if e.input != (InputShape::Vector { dim: synthetic.x_dim() }) {
                    return Err(format_err!("model input must be a vector of dimension {}", synthetic.x_dim()));
                }
                if e.domains != synthetic.domains || self.model.classes != synthetic.classes {
                    return Err(format_err!("model domains/classes must match the synthetic data"));
                }
                if *eval_per_cell == 0 {
                    return Err(format_err!("eval_per_cell must be positive"));
                }
            }
            DataConfig::Manifest { manifests, train_datasets, .. } => {
                if manifests.is_empty() || train_datasets.is_empty() {
                    return Err(format_err!("manifest data needs at least one manifest and one training dataset"));
                }
                if self.model.encoder.domains != train_datasets.len() {
                    return Err(format_err!(
                        "model has {} domains but {} training datasets are listed",
                        self.model.encoder.domains,
                        train_datasets.len()
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|source| Error::Toml { path: path.into(), source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}
