//! Scoring a model on an episode's query set.

use crate::data::Episode;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::{Classifier, FeatureExtractor, Head};
use crate::prob::ProbVector;

/// Anything that maps an image to class probabilities.
pub trait Predictor {
    fn way(&self) -> usize;
    fn predict(&self, image: &Image) -> Result<ProbVector>;
}

impl<E: FeatureExtractor, H: Head> Predictor for Classifier<E, H> {
    fn way(&self) -> usize {
        Classifier::way(self)
    }

    fn predict(&self, image: &Image) -> Result<ProbVector> {
        Classifier::predict(self, image)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeScore {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

/// Accuracy of `model` over all `N * Q` query examples.
pub fn evaluate_episode<P: Predictor + ?Sized>(model: &P, episode: &Episode) -> Result<EpisodeScore> {
    if model.way() != episode.way {
        return Err(Error::Contract(alloc::format!(
            "model is {}-way but the episode is {}-way",
            model.way(),
            episode.way
        )));
    }
    if episode.query.is_empty() {
        return Err(Error::Contract("episode has no query examples".into()));
    }
    let mut correct = 0;
    for ex in &episode.query {
        if model.predict(&ex.image)?.argmax() == ex.label {
            correct += 1;
        }
    }
    let total = episode.query.len();
    Ok(EpisodeScore {
        correct,
        total,
        accuracy: correct as f64 / total as f64,
    })
}
