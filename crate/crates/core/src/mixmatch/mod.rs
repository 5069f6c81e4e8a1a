//! Semi-supervised fine-tuning of an imprinted model.
//!
//! [`finetune_transmatch`] runs MixMatch: guess sharpened labels for unlabeled
//! images with an EMA copy of the model, MixUp labeled and unlabeled examples
//! with a shuffled partner set, and minimize soft cross-entropy on the mixed
//! labeled half plus `gamma` times squared error on the mixed unlabeled half.
//! [`finetune_supervised`] and [`finetune_pseudo_label`] are the baselines.

mod config;
mod finetune;
mod loss;
mod ops;

pub use config::SslConfig;
pub use finetune::{finetune_pseudo_label, finetune_supervised, finetune_transmatch, FinetuneOutcome};
pub use loss::{loss_l1, loss_l2, mixmatch_loss_and_grad, soft_cross_entropy, squared_error, LossAndGrad, LOG_CLAMP};
pub use ops::{
    build_mixmatch_batch, guess_label, mix_with_partners, mixup, sharpen, MixMatchBatch, MixedExample, Targeted,
};
