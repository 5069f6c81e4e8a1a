//! The five compared methods, each mapping a pre-trained extractor and an
//! episode to a classifier.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use serde::{Deserialize, Serialize};

use crate::data::Episode;
use crate::error::{Error, Result};
use crate::imprint::{imprint_from_episode, ImprintConfig};
use crate::mixmatch::{finetune_pseudo_label, finetune_supervised, finetune_transmatch, SslConfig};
use crate::model::{Classifier, CosineHead, FeatureExtractor};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Imprinted head, no fine-tuning.
    Imprinting,
    /// Imprinted head fine-tuned on the support set only.
    ImprintingFt,
    /// MixMatch from a randomly initialized head.
    Mixmatch,
    /// Imprinted head fine-tuned with pseudo-labels.
    PseudoLabel,
    /// Imprinted head fine-tuned with MixMatch.
    Transmatch,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Imprinting,
        Method::ImprintingFt,
        Method::Mixmatch,
        Method::PseudoLabel,
        Method::Transmatch,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Imprinting => "imprinting",
            Method::ImprintingFt => "imprinting_ft",
            Method::Mixmatch => "mixmatch",
            Method::PseudoLabel => "pseudo_label",
            Method::Transmatch => "transmatch",
        }
    }

    pub fn uses_unlabeled(&self) -> bool {
        matches!(self, Method::Mixmatch | Method::PseudoLabel | Method::Transmatch)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.iter().copied().find(|m| m.name() == s).ok_or_else(|| {
            let valid: Vec<&str> = Method::ALL.iter().map(Method::name).collect();
            Error::Config(alloc::format!(
                "unknown method '{s}'; valid methods: {}",
                valid.join(", ")
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodConfig {
    pub imprint: ImprintConfig,
    pub ssl: SslConfig,
}

/// A trained episode classifier and its fine-tuning loss trace.
#[derive(Debug, Clone)]
pub struct MethodOutcome<E> {
    pub model: Classifier<E, CosineHead>,
    pub epoch_losses: Vec<f64>,
}

/// Runs `method` on `episode` starting from `extractor`.
pub fn run_method<E: FeatureExtractor>(
    method: Method,
    extractor: &E,
    episode: &Episode,
    config: &MethodConfig,
) -> Result<MethodOutcome<E>> {
    let head = match method {
        Method::Mixmatch => CosineHead::random(
            episode.way,
            extractor.embedding_dim(),
            config.imprint.scale,
            rng::derive_seed(config.ssl.seed ^ 0x6865_6164, episode.episode_seed),
        )?,
        _ => imprint_from_episode(extractor, episode, &config.imprint)?,
    };
    let model = Classifier::new(extractor.clone(), head);
    let outcome = match method {
        Method::Imprinting => {
            return Ok(MethodOutcome {
                model,
                epoch_losses: Vec::new(),
            })
        }
        Method::ImprintingFt => finetune_supervised(model, episode, &config.ssl)?,
        Method::PseudoLabel => finetune_pseudo_label(model, episode, &config.ssl)?,
        Method::Mixmatch | Method::Transmatch => finetune_transmatch(model, episode, &config.ssl)?,
    };
    Ok(MethodOutcome {
        model: outcome.evaluation_model().clone(),
        epoch_losses: outcome.epoch_losses,
    })
}
