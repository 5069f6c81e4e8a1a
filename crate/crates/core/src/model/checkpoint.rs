use alloc::string::String;
use serde::{Deserialize, Serialize};

use super::convnet::{ConvNet, ConvNetConfig};
use super::extractor::FeatureExtractor;
use super::head::Head;
use super::params::ParamSet;
use super::pretrain::BaseHeadKind;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Enough to rebuild an extractor from its parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    ConvNet(ConvNetConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub epochs: usize,
    pub seed: u64,
    pub config_hash: String,
    pub base_head: BaseHeadKind,
    pub final_loss: f64,
}

/// A pre-trained extractor plus its base-class head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub architecture: Architecture,
    pub embedding_dim: usize,
    pub class_count: usize,
    pub extractor: ParamSet,
    pub head: ParamSet,
    pub metadata: TrainingMetadata,
}

impl Checkpoint {
    pub fn capture<E: FeatureExtractor, H: Head>(extractor: &E, head: &H, metadata: TrainingMetadata) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            architecture: extractor.architecture(),
            embedding_dim: extractor.embedding_dim(),
            class_count: head.num_classes(),
            extractor: extractor.params().clone(),
            head: head.params().clone(),
            metadata,
        }
    }

    pub fn check_version(&self) -> Result<()> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Config(alloc::format!(
                "unsupported checkpoint format version {} (expected {})",
                self.format_version,
                CHECKPOINT_FORMAT_VERSION
            )));
        }
        Ok(())
    }

    pub fn restore_convnet(&self) -> Result<ConvNet> {
        self.check_version()?;
        let Architecture::ConvNet(config) = &self.architecture;
        ConvNet::from_params(config.clone(), self.extractor.clone())
    }
}
