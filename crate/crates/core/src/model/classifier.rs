use alloc::vec;
use alloc::vec::Vec;

use super::extractor::{FeatureExtractor, FinetuneScope};
use super::head::{CosineHead, Head};
use super::optim::TrainMask;
use super::params::{ParamSet, Parameterized};
use crate::error::Result;
use crate::image::Image;
use crate::prob::{softmax, ProbVector};

/// A feature extractor with a classifier head on top.
#[derive(Debug, Clone)]
pub struct Classifier<E, H = CosineHead> {
    pub extractor: E,
    pub head: H,
}

/// Softmax outputs of a batch plus what backpropagation needs.
pub struct BatchForward<E: FeatureExtractor, H: Head> {
    pub probs: Vec<ProbVector>,
    tapes: Vec<(E::Tape, H::Tape)>,
}

impl<E: FeatureExtractor, H: Head> BatchForward<E, H> {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Gradient with respect to the logits given `weighted[j] = f_j * dL/df_j`,
/// where `f = softmax(z)`.
///
/// Working with the weighted form avoids dividing by tiny probabilities.
pub fn grad_logits_from_weighted(probs: &ProbVector, weighted: &[f64]) -> Vec<f64> {
    let total: f64 = weighted.iter().sum();
    weighted
        .iter()
        .zip(probs.entries())
        .map(|(h, f)| h - f * total)
        .collect()
}

impl<E: FeatureExtractor, H: Head> Classifier<E, H> {
    pub fn new(extractor: E, head: H) -> Self {
        Self { extractor, head }
    }

    pub fn way(&self) -> usize {
        self.head.num_classes()
    }

    pub fn logits(&self, image: &Image) -> Result<Vec<f64>> {
        let embedding = self.extractor.embed_one(image)?;
        self.head.logits(&embedding)
    }

    pub fn predict(&self, image: &Image) -> Result<ProbVector> {
        Ok(softmax(&self.logits(image)?))
    }

    pub fn forward_batch(&self, images: &[&Image]) -> Result<BatchForward<E, H>> {
        let mut probs = Vec::with_capacity(images.len());
        let mut tapes = Vec::with_capacity(images.len());
        for image in images {
            let (embedding, et) = self.extractor.forward(image)?;
            let (logits, ht) = self.head.forward(&embedding)?;
            probs.push(softmax(&logits));
            tapes.push((et, ht));
        }
        Ok(BatchForward { probs, tapes })
    }

    /// Backpropagates per-example logit gradients, accumulating into `grads`
    /// (extractor first, then head).
    pub fn backward_batch(
        &self,
        forward: &BatchForward<E, H>,
        grad_logits: &[Vec<f64>],
        mask: &TrainMask,
        grads: &mut [ParamSet],
    ) {
        let extractor_trainable = mask[0].iter().any(|t| *t);
        let (ext_grads, head_grads) = grads.split_at_mut(1);
        for ((et, ht), g) in forward.tapes.iter().zip(grad_logits) {
            let grad_embedding = self.head.backward(ht, g, &mut head_grads[0]);
            if extractor_trainable {
                self.extractor
                    .backward(et, &grad_embedding, &mut ext_grads[0], &mask[0]);
            }
        }
    }

    pub fn zero_grads(&self) -> Vec<ParamSet> {
        vec![self.extractor.params().zeros_like(), self.head.params().zeros_like()]
    }

    pub fn mask(&self, scope: FinetuneScope) -> TrainMask {
        vec![
            self.extractor.trainable_mask(scope),
            vec![true; self.head.params().len()],
        ]
    }

    pub fn after_step(&mut self) {
        self.head.after_step();
    }
}

impl<E: FeatureExtractor, H: Head> Parameterized for Classifier<E, H> {
    fn param_sets(&self) -> Vec<&ParamSet> {
        vec![self.extractor.params(), self.head.params()]
    }

    fn param_sets_mut(&mut self) -> Vec<&mut ParamSet> {
        vec![self.extractor.params_mut(), self.head.params_mut()]
    }
}
