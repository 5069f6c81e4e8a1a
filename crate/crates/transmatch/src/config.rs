//! Run configuration: one TOML file drives pre-training, benchmarks and sweeps.
//!
//! Every field has a default, so an empty file is a valid configuration. The
//! defaults describe the desk-scale lab: the procedural blob dataset, a small
//! conv net, and fine-tuning settings that fit a laptop CPU budget.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use transmatch_core::data::synthetic::BlobDatasetConfig;
use transmatch_core::data::{DistractorMode, EpisodeSpec};
use transmatch_core::imprint::ImprintConfig;
use transmatch_core::method::{Method, MethodConfig};
use transmatch_core::mixmatch::SslConfig;
use transmatch_core::model::{BaseHeadKind, ConvNetConfig, FinetuneScope, PretrainConfig};

use crate::error::{AppError, Result};

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "TRANSMATCH_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Procedurally generated blob images; the split is drawn at random.
    Synthetic {
        #[serde(default)]
        blobs: BlobDatasetConfig,
        #[serde(default)]
        split: SplitCounts,
    },
    /// A directory of class folders described by a manifest.
    Folder { path: PathBuf },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Synthetic {
            blobs: BlobDatasetConfig {
                seed: 1,
                ..BlobDatasetConfig::default()
            },
            split: SplitCounts::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitCounts {
    pub base: usize,
    pub validation: usize,
    pub novel: usize,
    pub seed: u64,
}

impl Default for SplitCounts {
    fn default() -> Self {
        Self {
            base: 40,
            validation: 8,
            novel: 16,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneSpec {
    pub network: ConvNetConfig,
    pub init_seed: u64,
    /// Pre-train on base plus validation classes (otherwise base only).
    pub include_validation: bool,
}

impl Default for BackboneSpec {
    fn default() -> Self {
        Self {
            network: ConvNetConfig::default(),
            init_seed: 3,
            include_validation: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSpec {
    pub way: usize,
    pub shot: usize,
    pub query: usize,
    pub unlabeled: usize,
    pub distractor_classes: usize,
    pub distractor_mode: DistractorMode,
    pub n_episodes: usize,
    pub seed: u64,
    /// Share episode seeds across methods. Turning this off gives every
    /// method its own episode sequence.
    pub paired: bool,
    pub methods: Vec<Method>,
    pub unlabeled_sweep: Vec<usize>,
    pub shot_sweep: Vec<usize>,
    pub distractor_sweep: Vec<usize>,
}

impl Default for EvalSpec {
    fn default() -> Self {
        Self {
            way: 5,
            shot: 1,
            query: 15,
            unlabeled: 30,
            distractor_classes: 0,
            distractor_mode: DistractorMode::default(),
            n_episodes: 100,
            seed: 2024,
            paired: true,
            methods: vec![Method::Imprinting, Method::Transmatch],
            unlabeled_sweep: vec![5, 15, 30],
            shot_sweep: vec![1, 3, 5],
            distractor_sweep: vec![1, 2, 3],
        }
    }
}

impl EvalSpec {
    pub fn episode_spec(&self) -> EpisodeSpec {
        EpisodeSpec {
            way: self.way,
            shot: self.shot,
            query: self.query,
            unlabeled: self.unlabeled,
            distractor_classes: self.distractor_classes,
            distractor_mode: self.distractor_mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    pub backbone: BackboneSpec,
    pub pretrain: PretrainConfig,
    pub imprint: ImprintConfig,
    pub ssl: SslConfig,
    pub eval: EvalSpec,
    /// Root for checkpoints and results. Excluded from the config hash.
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::default(),
            backbone: BackboneSpec::default(),
            pretrain: desk_pretrain(),
            imprint: ImprintConfig::default(),
            ssl: desk_ssl(),
            eval: EvalSpec::default(),
            output_dir: PathBuf::from("transmatch-out"),
        }
    }
}

/// Pre-training settings that train the default conv net reliably.
pub fn desk_pretrain() -> PretrainConfig {
    PretrainConfig {
        epochs: 60,
        learning_rate: 0.02,
        lr_step_epochs: 45,
        base_head: BaseHeadKind::Cosine,
        ..PretrainConfig::default()
    }
}

/// Fine-tuning settings sized for a CPU budget of about a second per episode.
pub fn desk_ssl() -> SslConfig {
    SslConfig {
        epochs: 16,
        batches_per_epoch: 16,
        learning_rate: 0.02,
        ema_decay: 0.99,
        scope: FinetuneScope::All,
        evaluate_with_ema: true,
        ..SslConfig::default()
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| AppError::config(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            AppError::Config(msg) => AppError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| AppError::Runtime(format!("cannot serialize config: {e}")))
    }

    /// Checks every section before any work starts.
    pub fn validate(&self) -> Result<()> {
        match &self.dataset {
            DatasetSpec::Synthetic { blobs, split } => {
                if blobs.num_classes == 0 || blobs.examples_per_class == 0 {
                    return Err(AppError::config("synthetic dataset needs classes and examples"));
                }
                if split.base == 0 || split.novel == 0 {
                    return Err(AppError::config("split needs base and novel classes"));
                }
                if split.base + split.validation + split.novel != blobs.num_classes {
                    return Err(AppError::config(format!(
                        "split counts sum to {} but the dataset has {} classes",
                        split.base + split.validation + split.novel,
                        blobs.num_classes
                    )));
                }
                if blobs.shape != self.backbone.network.input {
                    return Err(AppError::config("dataset image shape differs from the backbone input"));
                }
            }
            DatasetSpec::Folder { path } => {
                if path.as_os_str().is_empty() {
                    return Err(AppError::config("folder dataset needs a path"));
                }
            }
        }
        self.backbone.network.validate()?;
        self.pretrain.validate()?;
        self.ssl.validate()?;
        if self.imprint.scale.is_nan() || self.imprint.scale <= 0.0 {
            return Err(AppError::config("imprint scale must be positive"));
        }
        let e = &self.eval;
        if e.way < 2 || e.shot == 0 || e.query == 0 {
            return Err(AppError::config("evaluation needs way >= 2, shot >= 1 and query >= 1"));
        }
        if e.n_episodes < 2 {
            return Err(AppError::config(
                "n_episodes must be at least 2 for a confidence interval",
            ));
        }
        if e.methods.is_empty() {
            return Err(AppError::config("at least one method is required"));
        }
        if e.shot_sweep.contains(&0) {
            return Err(AppError::config("shot sweep values must be positive"));
        }
        Ok(())
    }

    pub fn method_config(&self) -> MethodConfig {
        MethodConfig {
            imprint: self.imprint,
            ssl: self.ssl,
        }
    }

    /// Canonical JSON of everything that affects results.
    pub fn canonical_json(&self) -> String {
        let mut clone = self.clone();
        clone.output_dir = PathBuf::new();
        serde_json::to_string(&clone).expect("config serializes")
    }

    /// SHA-256 of the canonical form, hex encoded. Stamped on every record.
    pub fn config_hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// Hash of the sections that determine the pre-trained checkpoint.
    pub fn pretrain_hash(&self) -> String {
        let key = serde_json::json!({
            "dataset": self.dataset,
            "backbone": self.backbone,
            "pretrain": self.pretrain,
        });
        hex::encode(Sha256::digest(key.to_string().as_bytes()))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.output_dir
            .join("checkpoints")
            .join(format!("pretrain-{}.json", &self.pretrain_hash()[..16]))
    }

    pub fn results_dir(&self) -> PathBuf {
        self.output_dir.join("results")
    }
}
