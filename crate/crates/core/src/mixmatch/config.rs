use serde::{Deserialize, Serialize};

use crate::data::AugmentationPolicy;
use crate::error::{Error, Result};
use crate::model::{FinetuneScope, SgdConfig};

/// Fine-tuning hyperparameters. Defaults follow the published MixMatch settings
/// for few-shot fine-tuning (`M = 2`, `T = 0.5`, `gamma = 5`, `alpha = 0.75`,
/// batches of 16, 64 batches per epoch, SGD with lr 0.001, momentum 0.9 and
/// weight decay 0.04).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SslConfig {
    /// Augmented copies averaged when guessing a label (`M`).
    pub guess_augmentations: usize,
    /// Sharpening temperature (`T`).
    pub temperature: f64,
    /// Weight of the unlabeled consistency loss.
    pub gamma: f64,
    /// Beta distribution parameter for MixUp.
    pub alpha: f64,
    pub batch_labeled: usize,
    pub batch_unlabeled: usize,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub ema_decay: f64,
    /// Ramp `gamma` linearly from 0 over the run instead of holding it constant.
    pub gamma_rampup: bool,
    pub scope: FinetuneScope,
    pub augmentation: AugmentationPolicy,
    /// Minimum confidence for accepting a pseudo-label.
    pub pseudo_label_threshold: f64,
    /// Score the EMA model instead of the live model.
    pub evaluate_with_ema: bool,
    pub seed: u64,
}

impl Default for SslConfig {
    fn default() -> Self {
        Self {
            guess_augmentations: 2,
            temperature: 0.5,
            gamma: 5.0,
            alpha: 0.75,
            batch_labeled: 16,
            batch_unlabeled: 16,
            epochs: 10,
            batches_per_epoch: 64,
            learning_rate: 0.001,
            weight_decay: 0.04,
            momentum: 0.9,
            ema_decay: 0.999,
            gamma_rampup: false,
            scope: FinetuneScope::All,
            augmentation: AugmentationPolicy::default(),
            pseudo_label_threshold: 0.8,
            evaluate_with_ema: false,
            seed: 0,
        }
    }
}

impl SslConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.into()));
        if self.guess_augmentations < 1 {
            return fail("M (guess augmentations) must be at least 1");
        }
        if !(self.temperature > 0.0) {
            return fail("sharpening temperature must be positive");
        }
        if !(self.gamma >= 0.0) {
            return fail("gamma must be non-negative");
        }
        if !(self.alpha > 0.0) {
            return fail("alpha must be positive");
        }
        if self.batch_labeled == 0 {
            return fail("labeled batch size must be positive");
        }
        if !(0.0..=1.0).contains(&self.ema_decay) {
            return fail("EMA decay must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.pseudo_label_threshold) {
            return fail("pseudo-label threshold must lie in [0, 1]");
        }
        self.sgd().validate()
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
        }
    }

    pub fn total_steps(&self) -> usize {
        self.epochs * self.batches_per_epoch
    }
}
