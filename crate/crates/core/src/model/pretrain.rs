use alloc::vec::Vec;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, TrainingMetadata};
use super::classifier::Classifier;
use super::extractor::{FeatureExtractor, FinetuneScope};
use super::head::Head;
use super::optim::{Sgd, SgdConfig, StepSchedule};
use crate::data::{augment_with, AugmentationPolicy, ImageDataset};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng;

/// Base-class classifier used during pre-training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseHeadKind {
    #[default]
    Linear,
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Multiply the learning rate by `lr_gamma` every this many epochs.
    pub lr_step_epochs: usize,
    pub lr_gamma: f64,
    pub augmentation: AugmentationPolicy,
    pub base_head: BaseHeadKind,
    pub cosine_scale: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 12,
            batch_size: 64,
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 5e-4,
            lr_step_epochs: 8,
            lr_gamma: 0.1,
            augmentation: AugmentationPolicy::default(),
            base_head: BaseHeadKind::Linear,
            cosine_scale: 10.0,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("pre-training batch size must be positive".into()));
        }
        if !(self.cosine_scale > 0.0) {
            return Err(Error::Config("cosine scale must be positive".into()));
        }
        self.sgd().validate()
    }

    fn sgd(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome<E, H> {
    pub classifier: Classifier<E, H>,
    pub checkpoint: Checkpoint,
    /// Mean mini-batch loss of each epoch (on augmented batches).
    pub epoch_losses: Vec<f64>,
    /// Cross-entropy over the un-augmented training set before and after training.
    pub initial_loss: f64,
    pub final_loss: f64,
    pub train_accuracy: f64,
}

/// Cross-entropy training of `extractor` + `head` on `dataset` with SGD,
/// momentum, weight decay and a step learning-rate schedule.
pub fn pretrain<E: FeatureExtractor, H: Head>(
    extractor: E,
    head: H,
    dataset: &ImageDataset,
    config: &PretrainConfig,
) -> Result<PretrainOutcome<E, H>> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("pre-training dataset is empty".into()));
    }
    if head.num_classes() != dataset.num_classes() {
        return Err(Error::Config(alloc::format!(
            "base head has {} classes, dataset has {}",
            head.num_classes(),
            dataset.num_classes()
        )));
    }
    let mut model = Classifier::new(extractor, head);
    let (initial_loss, _) = dataset_loss(&model, dataset)?;
    let mut sgd = Sgd::new(config.sgd())?;
    let schedule = StepSchedule {
        base: config.learning_rate,
        gamma: config.lr_gamma,
        step_epochs: config.lr_step_epochs,
    };
    let mask = model.mask(FinetuneScope::All);
    let mut rng = rng::seeded(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut step = 0;

    for epoch in 0..config.epochs {
        let lr = schedule.at_epoch(epoch);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let images: Vec<Image> = chunk
                .iter()
                .map(|&i| augment_with(&dataset.example(i).image, &config.augmentation, &mut rng))
                .collect();
            let refs: Vec<&Image> = images.iter().collect();
            let forward = model.forward_batch(&refs)?;
            let n = chunk.len() as f64;
            let mut loss = 0.0;
            let mut grad_logits = Vec::with_capacity(chunk.len());
            for (p, &i) in forward.probs.iter().zip(chunk) {
                let label = dataset.example(i).label;
                loss -= libm::log(p.entries()[label].max(1e-300));
                let mut g: Vec<f64> = p.entries().iter().map(|f| f / n).collect();
                g[label] -= 1.0 / n;
                grad_logits.push(g);
            }
            loss /= n;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    stage: "pre-training",
                    step,
                    loss,
                });
            }
            let mut grads = model.zero_grads();
            model.backward_batch(&forward, &grad_logits, &mask, &mut grads);
            sgd.step(&mut model, &grads, &mask, lr)?;
            model.after_step();
            total += loss;
            batches += 1;
            step += 1;
        }
        epoch_losses.push(total / batches as f64);
    }

    let (final_loss, train_accuracy) = dataset_loss(&model, dataset)?;
    if !final_loss.is_finite() {
        return Err(Error::Divergence {
            stage: "pre-training",
            step,
            loss: final_loss,
        });
    }
    let checkpoint = Checkpoint::capture(
        &model.extractor,
        &model.head,
        TrainingMetadata {
            epochs: config.epochs,
            seed: config.seed,
            config_hash: alloc::string::String::new(),
            base_head: config.base_head,
            final_loss,
        },
    );
    Ok(PretrainOutcome {
        classifier: model,
        checkpoint,
        epoch_losses,
        initial_loss,
        final_loss,
        train_accuracy,
    })
}

/// Mean cross-entropy and accuracy over the un-augmented dataset.
fn dataset_loss<E: FeatureExtractor, H: Head>(model: &Classifier<E, H>, dataset: &ImageDataset) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for ex in dataset.examples() {
        let p = model.predict(&ex.image)?;
        loss -= libm::log(p.entries()[ex.label].max(1e-300));
        if p.argmax() == ex.label {
            correct += 1;
        }
    }
    let n = dataset.len() as f64;
    Ok((loss / n, correct as f64 / n))
}
