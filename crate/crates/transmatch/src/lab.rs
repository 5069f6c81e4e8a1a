//! Pre-training and the loaded state every benchmark starts from.

use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;
use transmatch_core::data::{ClassSplit, ImageDataset};
use transmatch_core::model::{
    pretrain, BaseHeadKind, Checkpoint, ConvNet, CosineHead, FeatureExtractor, LinearHead, PretrainConfig,
};

use crate::checkpoint::{load_checkpoint, save_checkpoint, write_atomic};
use crate::config::RunConfig;
use crate::dataset::DataSource;
use crate::error::{AppError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointStatus {
    Trained,
    Reused,
}

#[derive(Debug, Serialize)]
struct TrainingLog<'a> {
    pretrain_hash: &'a str,
    pretrain: &'a PretrainConfig,
    train_classes: usize,
    train_examples: usize,
    initial_loss: f64,
    final_loss: f64,
    train_accuracy: f64,
    epoch_losses: &'a [f64],
    wall_time_secs: f64,
}

/// Classes the extractor is pre-trained on.
pub fn pretrain_classes(config: &RunConfig, split: &ClassSplit) -> Vec<usize> {
    let mut classes = split.base_classes.clone();
    if config.backbone.include_validation {
        classes.extend(&split.validation_classes);
    }
    classes
}

/// Pre-trains a fresh extractor on the base classes of `dataset`.
pub fn train_checkpoint(
    config: &RunConfig,
    dataset: &ImageDataset,
    split: &ClassSplit,
) -> Result<(Checkpoint, String)> {
    let base = dataset.restrict(&pretrain_classes(config, split))?;
    let seed = config.backbone.init_seed;
    let net = ConvNet::new(config.backbone.network.clone(), seed)?;
    let dim = net.embedding_dim();
    let started = Instant::now();
    let pc = &config.pretrain;
    let (mut checkpoint, initial_loss, final_loss, train_accuracy, epoch_losses) = match pc.base_head {
        BaseHeadKind::Linear => {
            let head = LinearHead::new(base.num_classes(), dim, seed + 1)?;
            let o = pretrain(net, head, &base, pc)?;
            (
                o.checkpoint,
                o.initial_loss,
                o.final_loss,
                o.train_accuracy,
                o.epoch_losses,
            )
        }
        BaseHeadKind::Cosine => {
            let head = CosineHead::random(base.num_classes(), dim, pc.cosine_scale, seed + 1)?;
            let o = pretrain(net, head, &base, pc)?;
            (
                o.checkpoint,
                o.initial_loss,
                o.final_loss,
                o.train_accuracy,
                o.epoch_losses,
            )
        }
    };
    let hash = config.pretrain_hash();
    checkpoint.metadata.config_hash = hash.clone();
    let log = TrainingLog {
        pretrain_hash: &hash,
        pretrain: pc,
        train_classes: base.num_classes(),
        train_examples: base.len(),
        initial_loss,
        final_loss,
        train_accuracy,
        epoch_losses: &epoch_losses,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    let log = serde_json::to_string_pretty(&log).expect("training log serializes");
    Ok((checkpoint, log))
}

/// Makes sure the checkpoint for `config` exists, training it if needed.
///
/// An existing checkpoint with a matching hash is reused unless `force` is set.
pub fn ensure_checkpoint(config: &RunConfig, force: bool) -> Result<(PathBuf, CheckpointStatus)> {
    let path = config.checkpoint_path();
    if !force && path.exists() {
        let existing = load_checkpoint(&path)?;
        if existing.metadata.config_hash == config.pretrain_hash() {
            return Ok((path, CheckpointStatus::Reused));
        }
    }
    let (dataset, split) = config.dataset.load()?;
    let (checkpoint, log) = train_checkpoint(config, &dataset, &split)?;
    save_checkpoint(&path, &checkpoint)?;
    write_atomic(&path.with_extension("log.json"), log.as_bytes())?;
    Ok((path, CheckpointStatus::Trained))
}

/// Dataset, split and pre-trained extractor shared by every method in a run.
#[derive(Debug, Clone)]
pub struct Lab {
    pub config: RunConfig,
    pub dataset: ImageDataset,
    pub split: ClassSplit,
    pub extractor: ConvNet,
}

impl Lab {
    /// Loads the dataset and the existing checkpoint for `config`.
    pub fn open(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let path = config.checkpoint_path();
        if !path.exists() {
            return Err(AppError::config(format!(
                "no checkpoint at {}; run `transmatch pretrain` first",
                path.display()
            )));
        }
        let checkpoint = load_checkpoint(&path)?;
        if checkpoint.metadata.config_hash != config.pretrain_hash() {
            return Err(AppError::config(format!(
                "checkpoint {} was trained with a different configuration",
                path.display()
            )));
        }
        let (dataset, split) = config.dataset.load()?;
        Self::from_parts(config, dataset, split, checkpoint.restore_convnet()?)
    }

    pub fn from_parts(config: RunConfig, dataset: ImageDataset, split: ClassSplit, extractor: ConvNet) -> Result<Self> {
        split.validate(dataset.num_classes())?;
        if dataset.shape() != extractor.config().input {
            return Err(AppError::config("dataset image shape differs from the extractor input"));
        }
        Ok(Self {
            config,
            dataset,
            split,
            extractor,
        })
    }
}
