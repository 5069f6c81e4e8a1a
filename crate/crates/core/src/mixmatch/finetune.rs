use alloc::vec::Vec;
use rand::Rng as _;

use super::config::SslConfig;
use super::loss::{mixmatch_loss_and_grad, LOG_CLAMP};
use super::ops::{build_mixmatch_batch, guess_with_copies, Targeted};
use crate::data::{augment_with, Episode};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::{grad_logits_from_weighted, Classifier, CosineHead, EmaShadow, FeatureExtractor, Sgd, TrainMask};
use crate::prob::ProbVector;
use crate::rng::{self, Rng};

/// A fine-tuned model, its EMA shadow, and the loss trace.
#[derive(Debug, Clone)]
pub struct FinetuneOutcome<E> {
    pub model: Classifier<E, CosineHead>,
    pub ema_model: Classifier<E, CosineHead>,
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Unlabeled examples that passed the pseudo-label confidence gate (zero
    /// for the other methods).
    pub accepted_pseudo_labels: usize,
    pub evaluate_with_ema: bool,
}

impl<E> FinetuneOutcome<E> {
    /// The model that should be scored on the query set.
    pub fn evaluation_model(&self) -> &Classifier<E, CosineHead> {
        if self.evaluate_with_ema {
            &self.ema_model
        } else {
            &self.model
        }
    }
}

struct Trainer<E: FeatureExtractor> {
    model: Classifier<E, CosineHead>,
    ema: EmaShadow<Classifier<E, CosineHead>>,
    sgd: Sgd,
    mask: TrainMask,
    rng: Rng,
    step: usize,
}

impl<E: FeatureExtractor> Trainer<E> {
    fn new(model: Classifier<E, CosineHead>, episode: &Episode, config: &SslConfig, stream: u64) -> Result<Self> {
        config.validate()?;
        if model.way() != episode.way {
            return Err(Error::Contract(alloc::format!(
                "head is {}-way but the episode is {}-way",
                model.way(),
                episode.way
            )));
        }
        if episode.support.is_empty() {
            return Err(Error::Config("episode has no support examples".into()));
        }
        let mask = model.mask(config.scope);
        let seed = rng::derive_seed(rng::derive_seed(config.seed, episode.episode_seed), stream);
        Ok(Self {
            ema: EmaShadow::new(&model, config.ema_decay)?,
            sgd: Sgd::new(config.sgd())?,
            mask,
            rng: rng::seeded(seed),
            model,
            step: 0,
        })
    }

    fn labeled_batch(&mut self, episode: &Episode, config: &SslConfig) -> Vec<Targeted> {
        (0..config.batch_labeled)
            .map(|_| {
                let ex = &episode.support[self.rng.random_range(0..episode.support.len())];
                (
                    augment_with(&ex.image, &config.augmentation, &mut self.rng),
                    ProbVector::one_hot(episode.way, ex.label),
                )
            })
            .collect()
    }

    fn unlabeled_draws<'a>(&mut self, pool: &[&'a Image], config: &SslConfig) -> Vec<&'a Image> {
        if pool.is_empty() {
            return Vec::new();
        }
        (0..config.batch_unlabeled)
            .map(|_| pool[self.rng.random_range(0..pool.len())])
            .collect()
    }

    fn apply(&mut self, grads: &[crate::model::ParamSet], config: &SslConfig) -> Result<()> {
        self.sgd
            .step(&mut self.model, grads, &self.mask, config.learning_rate)?;
        self.model.after_step();
        self.ema.update(&self.model)?;
        self.step += 1;
        Ok(())
    }

    fn check(&self, stage: &'static str, loss: f64) -> Result<()> {
        if loss.is_finite() {
            Ok(())
        } else {
            Err(Error::Divergence {
                stage,
                step: self.step,
                loss,
            })
        }
    }

    fn finish(self, epoch_losses: Vec<f64>, accepted: usize, config: &SslConfig) -> FinetuneOutcome<E> {
        FinetuneOutcome {
            model: self.model,
            ema_model: self.ema.model().clone(),
            epoch_losses,
            accepted_pseudo_labels: accepted,
            evaluate_with_ema: config.evaluate_with_ema,
        }
    }
}

/// MixMatch fine-tuning of an (imprinted) model on one episode.
///
/// Every step draws a labeled batch with replacement from the support set and
/// an unlabeled batch from the episode's unlabeled pool, guesses labels with
/// the EMA model, mixes, and takes one SGD step on `l1 + gamma * l2`.
pub fn finetune_transmatch<E: FeatureExtractor>(
    model: Classifier<E, CosineHead>,
    episode: &Episode,
    config: &SslConfig,
) -> Result<FinetuneOutcome<E>> {
    let mut t = Trainer::new(model, episode, config, 1)?;
    let pool: Vec<&Image> = episode.unlabeled_pool().collect();
    let total_steps = config.total_steps().max(1);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let mut sum = 0.0;
        for _ in 0..config.batches_per_epoch {
            let labeled = t.labeled_batch(episode, config);
            let mut unlabeled = Vec::with_capacity(config.batch_unlabeled);
            for image in t.unlabeled_draws(&pool, config) {
                let (mut copies, guess) = guess_with_copies(
                    t.ema.model(),
                    image,
                    config.guess_augmentations,
                    config.temperature,
                    &config.augmentation,
                    &mut t.rng,
                )?;
                unlabeled.push((copies.swap_remove(0), guess));
            }
            let batch = build_mixmatch_batch(&labeled, &unlabeled, config.alpha, &mut t.rng)?;
            let gamma = if config.gamma_rampup {
                config.gamma * (t.step as f64 / total_steps as f64).min(1.0)
            } else {
                config.gamma
            };
            let out = mixmatch_loss_and_grad(&t.model, &batch, gamma, &t.mask)?;
            t.check("MixMatch fine-tuning", out.total)?;
            t.apply(&out.grads, config)?;
            sum += out.total;
        }
        epoch_losses.push(sum / config.batches_per_epoch.max(1) as f64);
    }
    Ok(t.finish(epoch_losses, 0, config))
}

/// Hard-label cross-entropy contribution of one example, as weighted gradient
/// terms (see [`grad_logits_from_weighted`]).
fn hard_ce(p: &ProbVector, label: usize, weight: f64) -> (f64, Vec<f64>) {
    let f = p.entries()[label];
    let loss = -weight * libm::log(f.max(LOG_CLAMP));
    let mut weighted = alloc::vec![0.0; p.len()];
    if f > LOG_CLAMP {
        weighted[label] = -weight;
    }
    (loss, grad_logits_from_weighted(p, &weighted))
}

/// Plain cross-entropy fine-tuning on the support set only (no unlabeled data).
pub fn finetune_supervised<E: FeatureExtractor>(
    model: Classifier<E, CosineHead>,
    episode: &Episode,
    config: &SslConfig,
) -> Result<FinetuneOutcome<E>> {
    let mut t = Trainer::new(model, episode, config, 2)?;
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let mut sum = 0.0;
        for _ in 0..config.batches_per_epoch {
            let labeled = t.labeled_batch(episode, config);
            let images: Vec<&Image> = labeled.iter().map(|(img, _)| img).collect();
            let forward = t.model.forward_batch(&images)?;
            let n = labeled.len() as f64;
            let mut loss = 0.0;
            let mut grad_logits = Vec::with_capacity(labeled.len());
            for ((_, target), p) in labeled.iter().zip(&forward.probs) {
                let (l, g) = hard_ce(p, target.argmax(), 1.0 / n);
                loss += l;
                grad_logits.push(g);
            }
            t.check("supervised fine-tuning", loss)?;
            let mut grads = t.model.zero_grads();
            t.model.backward_batch(&forward, &grad_logits, &t.mask, &mut grads);
            t.apply(&grads, config)?;
            sum += loss;
        }
        epoch_losses.push(sum / config.batches_per_epoch.max(1) as f64);
    }
    Ok(t.finish(epoch_losses, 0, config))
}

/// Pseudo-label fine-tuning: unlabeled images whose current top prediction is at
/// least `pseudo_label_threshold` confident are trained on that hard label, with
/// a weight ramping linearly from 0 to 1 over the run.
pub fn finetune_pseudo_label<E: FeatureExtractor>(
    model: Classifier<E, CosineHead>,
    episode: &Episode,
    config: &SslConfig,
) -> Result<FinetuneOutcome<E>> {
    let mut t = Trainer::new(model, episode, config, 3)?;
    let pool: Vec<&Image> = episode.unlabeled_pool().collect();
    let total_steps = config.total_steps().max(1);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut accepted = 0;
    for _ in 0..config.epochs {
        let mut sum = 0.0;
        for _ in 0..config.batches_per_epoch {
            let labeled = t.labeled_batch(episode, config);
            let draws = t.unlabeled_draws(&pool, config);
            let unlabeled: Vec<Image> = draws
                .into_iter()
                .map(|img| augment_with(img, &config.augmentation, &mut t.rng))
                .collect();
            let images: Vec<&Image> = labeled.iter().map(|(img, _)| img).chain(&unlabeled).collect();
            let forward = t.model.forward_batch(&images)?;
            let (probs_l, probs_u) = forward.probs.split_at(labeled.len());
            let weight = (t.step + 1) as f64 / total_steps as f64;
            let n_l = labeled.len() as f64;
            let n_u = unlabeled.len().max(1) as f64;
            let mut loss = 0.0;
            let mut grad_logits = Vec::with_capacity(images.len());
            for ((_, target), p) in labeled.iter().zip(probs_l) {
                let (l, g) = hard_ce(p, target.argmax(), 1.0 / n_l);
                loss += l;
                grad_logits.push(g);
            }
            for p in probs_u {
                if p.max() >= config.pseudo_label_threshold {
                    accepted += 1;
                    let (l, g) = hard_ce(p, p.argmax(), weight / n_u);
                    loss += l;
                    grad_logits.push(g);
                } else {
                    grad_logits.push(alloc::vec![0.0; p.len()]);
                }
            }
            t.check("pseudo-label fine-tuning", loss)?;
            let mut grads = t.model.zero_grads();
            t.model.backward_batch(&forward, &grad_logits, &t.mask, &mut grads);
            t.apply(&grads, config)?;
            sum += loss;
        }
        epoch_losses.push(sum / config.batches_per_epoch.max(1) as f64);
    }
    Ok(t.finish(epoch_losses, accepted, config))
}
