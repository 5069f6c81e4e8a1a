use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::checkpoint::Architecture;
use super::params::ParamSet;
use crate::error::Result;
use crate::image::{Image, ImageShape};

/// Which parameters fine-tuning may update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinetuneScope {
    /// Every extractor and head parameter.
    #[default]
    All,
    /// The extractor's final embedding layer plus the head.
    Embedding,
    /// The classifier head only; the extractor is frozen.
    Head,
}

/// A differentiable map from images to `embedding_dim`-dimensional features.
///
/// Embeddings are returned un-normalized; heads normalize as needed.
pub trait FeatureExtractor: Clone {
    /// Intermediate values recorded by [`FeatureExtractor::forward`] for backpropagation.
    type Tape;

    fn input_shape(&self) -> ImageShape;
    fn embedding_dim(&self) -> usize;
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    fn architecture(&self) -> Architecture;

    fn forward(&self, image: &Image) -> Result<(Vec<f64>, Self::Tape)>;

    /// Accumulates into `grads` the gradient of a scalar loss given its gradient
    /// with respect to the embedding. Parameters whose `trainable` flag is false
    /// may be skipped.
    fn backward(&self, tape: &Self::Tape, grad_embedding: &[f64], grads: &mut ParamSet, trainable: &[bool]);

    fn trainable_mask(&self, scope: FinetuneScope) -> Vec<bool>;

    fn embed_one(&self, image: &Image) -> Result<Vec<f64>> {
        Ok(self.forward(image)?.0)
    }
}

/// Embeds a batch of images. An empty batch gives an empty result.
pub fn embed<E: FeatureExtractor>(extractor: &E, images: &[Image]) -> Result<Vec<Vec<f64>>> {
    images.iter().map(|img| extractor.embed_one(img)).collect()
}
