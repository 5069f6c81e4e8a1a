//! Feature extractor, classifier heads, optimizer, parameter EMA and
//! base-class pre-training.

mod checkpoint;
mod classifier;
mod convnet;
mod ema;
mod extractor;
mod head;
mod ops;
mod optim;
mod params;
mod pretrain;

pub use checkpoint::{Architecture, Checkpoint, TrainingMetadata, CHECKPOINT_FORMAT_VERSION};
pub use classifier::{grad_logits_from_weighted, BatchForward, Classifier};
pub use convnet::{ConvNet, ConvNetConfig, ConvTape};
pub use ema::{ema_update, EmaShadow};
pub use extractor::{embed, FeatureExtractor, FinetuneScope};
pub use head::{cosine_scores, predict, CosineHead, CosineTape, Head, LinearHead, LinearTape};
pub use ops::{dot, l2_norm, normalize, NORMALIZE_EPS};
pub use optim::{full_mask, Sgd, SgdConfig, StepSchedule, TrainMask};
pub use params::{Param, ParamSet, Parameterized};
pub use pretrain::{pretrain, BaseHeadKind, PretrainConfig, PretrainOutcome};
