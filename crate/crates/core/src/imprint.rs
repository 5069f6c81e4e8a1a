//! Classifier weight imprinting.
//!
//! The weight vector of each novel class is set from the mean embedding of
//! that class's support examples, which makes cosine classification with the
//! imprinted head a nearest-class-mean rule on the unit sphere.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::data::{augment_with, AugmentationPolicy, Episode};
use crate::error::{Error, Result};
use crate::model::{l2_norm, normalize, CosineHead, FeatureExtractor, NORMALIZE_EPS};
use crate::rng;

/// How class embeddings are combined into a weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImprintMode {
    /// Normalize each embedding, average, renormalize.
    #[default]
    NormalizedMean,
    /// Average the raw embeddings, then normalize.
    RawMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImprintConfig {
    /// Augmented copies per support image on top of the original.
    pub augmentation_copies: usize,
    pub augmentation: AugmentationPolicy,
    pub mode: ImprintMode,
    pub scale: f64,
}

impl Default for ImprintConfig {
    fn default() -> Self {
        Self {
            augmentation_copies: 10,
            augmentation: AugmentationPolicy::default(),
            mode: ImprintMode::NormalizedMean,
            scale: 10.0,
        }
    }
}

/// Support embeddings grouped by episode class.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportEmbeddings {
    per_class: Vec<Vec<Vec<f64>>>,
    dim: usize,
}

impl SupportEmbeddings {
    pub fn new(per_class: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let dim = per_class
            .iter()
            .flatten()
            .next()
            .map(Vec::len)
            .ok_or_else(|| Error::Contract("support embeddings are empty".into()))?;
        for (class, embeddings) in per_class.iter().enumerate() {
            if embeddings.is_empty() {
                return Err(Error::Contract(alloc::format!(
                    "class {class} has no support embeddings"
                )));
            }
            if embeddings.iter().any(|e| e.len() != dim) {
                return Err(Error::Contract(alloc::format!(
                    "class {class} has embeddings of the wrong dimension"
                )));
            }
        }
        Ok(Self { per_class, dim })
    }

    pub fn way(&self) -> usize {
        self.per_class.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class(&self, class: usize) -> &[Vec<f64>] {
        &self.per_class[class]
    }
}

/// Imprints one unit-norm weight row per class.
pub fn imprint_weights(support: &SupportEmbeddings, mode: ImprintMode, scale: f64) -> Result<CosineHead> {
    let mut rows = Vec::with_capacity(support.way());
    for (class, embeddings) in support.per_class.iter().enumerate() {
        let mut mean = vec![0.0; support.dim];
        for e in embeddings {
            let contribution = match mode {
                ImprintMode::NormalizedMean => normalize(e).map_err(|_| Error::DegenerateClass {
                    class,
                    norm: l2_norm(e),
                })?,
                ImprintMode::RawMean => e.clone(),
            };
            for (m, v) in mean.iter_mut().zip(&contribution) {
                *m += v;
            }
        }
        let k = embeddings.len() as f64;
        mean.iter_mut().for_each(|m| *m /= k);
        let norm = l2_norm(&mean);
        if norm <= NORMALIZE_EPS {
            return Err(Error::DegenerateClass { class, norm });
        }
        rows.push(mean);
    }
    CosineHead::from_rows(&rows, scale)
}

/// Embeds every support image plus `augmentation_copies` augmented versions and
/// imprints from all of them.
pub fn imprint_from_episode<E: FeatureExtractor>(
    extractor: &E,
    episode: &Episode,
    config: &ImprintConfig,
) -> Result<CosineHead> {
    if episode.support.is_empty() {
        return Err(Error::Contract("episode has no support examples".into()));
    }
    let mut rng = rng::seeded(rng::derive_seed(config.augmentation.rng_seed, episode.episode_seed));
    let mut per_class = vec![Vec::new(); episode.way];
    for ex in &episode.support {
        let bucket = per_class
            .get_mut(ex.label)
            .ok_or_else(|| Error::Contract(alloc::format!("support label {} outside the episode", ex.label)))?;
        bucket.push(extractor.embed_one(&ex.image)?);
        for _ in 0..config.augmentation_copies {
            let copy = augment_with(&ex.image, &config.augmentation, &mut rng);
            bucket.push(extractor.embed_one(&copy)?);
        }
    }
    imprint_weights(&SupportEmbeddings::new(per_class)?, config.mode, config.scale)
}
