use alloc::vec::Vec;

use super::ops::{MixMatchBatch, MixedExample};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::{grad_logits_from_weighted, Classifier, FeatureExtractor, Head, ParamSet, TrainMask};
use crate::prob::ProbVector;

/// Probabilities are clamped to at least this value inside the logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

/// Mean of `-sum_j p_j log f_j` over the batch.
pub fn soft_cross_entropy(targets: &[&ProbVector], predictions: &[ProbVector]) -> f64 {
    if targets.is_empty() {
        return 0.0;
    }
    let total: f64 = targets
        .iter()
        .zip(predictions)
        .map(|(p, f)| {
            p.entries()
                .iter()
                .zip(f.entries())
                .map(|(pj, fj)| -pj * libm::log(fj.max(LOG_CLAMP)))
                .sum::<f64>()
        })
        .sum();
    total / targets.len() as f64
}

/// `sum ||p - f||^2 / (classes * batch)`; zero for an empty batch.
pub fn squared_error(targets: &[&ProbVector], predictions: &[ProbVector], classes: usize) -> f64 {
    if targets.is_empty() {
        return 0.0;
    }
    let total: f64 = targets
        .iter()
        .zip(predictions)
        .map(|(p, f)| {
            p.entries()
                .iter()
                .zip(f.entries())
                .map(|(pj, fj)| (pj - fj) * (pj - fj))
                .sum::<f64>()
        })
        .sum();
    total / (classes as f64 * targets.len() as f64)
}

fn predictions<E: FeatureExtractor, H: Head>(
    batch: &[MixedExample],
    model: &Classifier<E, H>,
) -> Result<Vec<ProbVector>> {
    batch.iter().map(|m| model.predict(&m.image)).collect()
}

/// Supervised MixMatch term: soft cross-entropy on the mixed labeled half.
pub fn loss_l1<E: FeatureExtractor, H: Head>(x1: &[MixedExample], model: &Classifier<E, H>) -> Result<f64> {
    if x1.is_empty() {
        return Err(Error::Config("the labeled loss needs a non-empty batch".into()));
    }
    let targets: Vec<&ProbVector> = x1.iter().map(|m| &m.target).collect();
    Ok(soft_cross_entropy(&targets, &predictions(x1, model)?))
}

/// Consistency term: squared error on the mixed unlabeled half, normalized by
/// the number of classes.
pub fn loss_l2<E: FeatureExtractor, H: Head>(
    x2: &[MixedExample],
    model: &Classifier<E, H>,
    classes: usize,
) -> Result<f64> {
    if classes == 0 {
        return Err(Error::Config("the consistency loss needs at least one class".into()));
    }
    let targets: Vec<&ProbVector> = x2.iter().map(|m| &m.target).collect();
    Ok(squared_error(&targets, &predictions(x2, model)?, classes))
}

#[derive(Debug, Clone)]
pub struct LossAndGrad {
    pub total: f64,
    pub labeled: f64,
    pub unlabeled: f64,
    /// Gradient of `total` for the extractor and the head parameters.
    pub grads: Vec<ParamSet>,
}

/// `l1 + gamma * l2` on a MixMatch batch and its gradient with respect to the
/// live model's parameters.
pub fn mixmatch_loss_and_grad<E: FeatureExtractor, H: Head>(
    model: &Classifier<E, H>,
    batch: &MixMatchBatch,
    gamma: f64,
    mask: &TrainMask,
) -> Result<LossAndGrad> {
    if batch.labeled.is_empty() {
        return Err(Error::Config("the labeled loss needs a non-empty batch".into()));
    }
    let images: Vec<&Image> = batch.labeled.iter().chain(&batch.unlabeled).map(|m| &m.image).collect();
    let forward = model.forward_batch(&images)?;
    let (probs_l, probs_u) = forward.probs.split_at(batch.labeled.len());
    let targets_l: Vec<&ProbVector> = batch.labeled.iter().map(|m| &m.target).collect();
    let targets_u: Vec<&ProbVector> = batch.unlabeled.iter().map(|m| &m.target).collect();
    let classes = model.way();
    let labeled = soft_cross_entropy(&targets_l, probs_l);
    let unlabeled = squared_error(&targets_u, probs_u, classes);

    let n1 = batch.labeled.len() as f64;
    let mut grad_logits = Vec::with_capacity(images.len());
    for (p, f) in targets_l.iter().zip(probs_l) {
        // f_j * d/df_j of -p_j log f_j / n1
        let weighted: Vec<f64> = p
            .entries()
            .iter()
            .zip(f.entries())
            .map(|(pj, fj)| if *fj > LOG_CLAMP { -pj / n1 } else { 0.0 })
            .collect();
        grad_logits.push(grad_logits_from_weighted(f, &weighted));
    }
    if !batch.unlabeled.is_empty() {
        let coef = 2.0 * gamma / (classes as f64 * batch.unlabeled.len() as f64);
        for (p, f) in targets_u.iter().zip(probs_u) {
            let weighted: Vec<f64> = p
                .entries()
                .iter()
                .zip(f.entries())
                .map(|(pj, fj)| -coef * (pj - fj) * fj)
                .collect();
            grad_logits.push(grad_logits_from_weighted(f, &weighted));
        }
    }
    let mut grads = model.zero_grads();
    model.backward_batch(&forward, &grad_logits, mask, &mut grads);
    Ok(LossAndGrad {
        total: labeled + gamma * unlabeled,
        labeled,
        unlabeled,
        grads,
    })
}
