//! Datasets, class splits, episode sampling and augmentation.

mod augment;
mod dataset;
mod episode;
mod split;
pub mod synthetic;

pub use augment::{augment, augment_with, AugmentationPolicy};
pub use dataset::{ImageDataset, LabeledExample};
pub use episode::{sample_episode, DistractorMode, Episode, EpisodeSpec};
pub use split::{make_split, ClassSplit};
