use alloc::vec::Vec;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::{ImageDataset, LabeledExample};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng;

/// How unlabeled images from distractor classes relate to the unlabeled budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistractorMode {
    /// The `N * U` budget is shared evenly between the episode classes and
    /// the distractor classes.
    #[default]
    Replace,
    /// Every distractor class adds `U` images on top of the `N * U` budget.
    Add,
}

/// Shape of an `N`-way `K`-shot semi-supervised episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeSpec {
    pub way: usize,
    pub shot: usize,
    pub query: usize,
    /// Unlabeled images per class.
    pub unlabeled: usize,
    pub distractor_classes: usize,
    pub distractor_mode: DistractorMode,
}

impl Default for EpisodeSpec {
    fn default() -> Self {
        Self {
            way: 5,
            shot: 1,
            query: 15,
            unlabeled: 30,
            distractor_classes: 0,
            distractor_mode: DistractorMode::Replace,
        }
    }
}

impl EpisodeSpec {
    /// Unlabeled images drawn from each episode class and from each distractor class.
    pub fn unlabeled_per_class(&self) -> (usize, usize) {
        match (self.distractor_classes, self.distractor_mode) {
            (0, _) => (self.unlabeled, 0),
            (d, DistractorMode::Replace) => {
                let each = self.way * self.unlabeled / (self.way + d);
                (each, each)
            }
            (_, DistractorMode::Add) => (self.unlabeled, self.unlabeled),
        }
    }
}

/// One sampled few-shot task. Labels are re-indexed to `0..way`.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub support: Vec<LabeledExample>,
    pub query: Vec<LabeledExample>,
    pub unlabeled: Vec<Image>,
    pub distractor_unlabeled: Vec<Image>,
    pub way: usize,
    pub shot: usize,
    pub episode_seed: u64,
    /// Dataset class id behind each episode label.
    pub classes: Vec<usize>,
    pub distractor_source_classes: Vec<usize>,
    /// Dataset indices of the support, query, unlabeled and distractor examples.
    pub support_indices: Vec<usize>,
    pub query_indices: Vec<usize>,
    pub unlabeled_indices: Vec<usize>,
    pub distractor_indices: Vec<usize>,
}

impl Episode {
    /// All unlabeled images, episode classes first, then distractors.
    pub fn unlabeled_pool(&self) -> impl Iterator<Item = &Image> {
        self.unlabeled.iter().chain(&self.distractor_unlabeled)
    }

    pub fn unlabeled_pool_len(&self) -> usize {
        self.unlabeled.len() + self.distractor_unlabeled.len()
    }
}

/// Samples an episode from `novel_classes` of `dataset`.
///
/// Support, query and unlabeled examples of a class come from one shuffle of
/// that class's examples, so no example plays two roles. For a fixed seed the
/// unlabeled pool of a smaller U is a prefix of the pool of a larger U.
pub fn sample_episode(
    dataset: &ImageDataset,
    novel_classes: &[usize],
    spec: &EpisodeSpec,
    seed: u64,
) -> Result<Episode> {
    if spec.way == 0 {
        return Err(Error::Config("episode needs at least one class".into()));
    }
    let needed_classes = spec.way + spec.distractor_classes;
    if novel_classes.len() < needed_classes {
        return Err(Error::Config(alloc::format!(
            "episode needs {} classes ({} way + {} distractor) but only {} novel classes exist",
            needed_classes,
            spec.way,
            spec.distractor_classes,
            novel_classes.len()
        )));
    }
    if let Some(&bad) = novel_classes.iter().find(|&&c| c >= dataset.num_classes()) {
        return Err(Error::Config(alloc::format!(
            "novel class {bad} out of range for {} classes",
            dataset.num_classes()
        )));
    }

    let mut rng = rng::seeded(seed);
    let mut pool = novel_classes.to_vec();
    pool.shuffle(&mut rng);
    let classes = pool[..spec.way].to_vec();
    let distractors = pool[spec.way..needed_classes].to_vec();
    let (unlabeled_each, distractor_each) = spec.unlabeled_per_class();

    let mut episode = Episode {
        support: Vec::with_capacity(spec.way * spec.shot),
        query: Vec::with_capacity(spec.way * spec.query),
        unlabeled: Vec::with_capacity(spec.way * unlabeled_each),
        distractor_unlabeled: Vec::with_capacity(distractors.len() * distractor_each),
        way: spec.way,
        shot: spec.shot,
        episode_seed: seed,
        classes: classes.clone(),
        distractor_source_classes: distractors.clone(),
        support_indices: Vec::new(),
        query_indices: Vec::new(),
        unlabeled_indices: Vec::new(),
        distractor_indices: Vec::new(),
    };

    for (label, &class) in classes.iter().enumerate() {
        let needed = spec.shot + spec.query + unlabeled_each;
        let drawn = draw(dataset, class, needed, &mut rng)?;
        let (support, rest) = drawn.split_at(spec.shot);
        let (query, unlabeled) = rest.split_at(spec.query);
        for &i in support {
            episode.support.push(relabel(dataset, i, label));
            episode.support_indices.push(i);
        }
        for &i in query {
            episode.query.push(relabel(dataset, i, label));
            episode.query_indices.push(i);
        }
        for &i in unlabeled {
            episode.unlabeled.push(dataset.example(i).image.clone());
            episode.unlabeled_indices.push(i);
        }
    }
    for &class in &distractors {
        for i in draw(dataset, class, distractor_each, &mut rng)? {
            episode.distractor_unlabeled.push(dataset.example(i).image.clone());
            episode.distractor_indices.push(i);
        }
    }
    Ok(episode)
}

fn draw(dataset: &ImageDataset, class: usize, needed: usize, rng: &mut rng::Rng) -> Result<Vec<usize>> {
    let available = dataset.class_indices(class);
    if available.len() < needed {
        return Err(Error::Sampling {
            class,
            needed,
            available: available.len(),
        });
    }
    // A full shuffle consumes the same randomness whatever `needed` is, so
    // episodes that differ only in U share their support and query sets.
    let mut indices = available.to_vec();
    indices.shuffle(rng);
    indices.truncate(needed);
    Ok(indices)
}

fn relabel(dataset: &ImageDataset, index: usize, label: usize) -> LabeledExample {
    LabeledExample {
        image: dataset.example(index).image.clone(),
        label,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ImageShape;
    use alloc::string::ToString;
    use alloc::vec;

    fn toy_dataset(classes: usize, per_class: usize) -> ImageDataset {
        let shape = ImageShape::new(1, 2, 2);
        let mut examples = Vec::new();
        for c in 0..classes {
            for k in 0..per_class {
                let v = ((c * per_class + k) % 97) as f64 / 97.0;
                examples.push(LabeledExample {
                    image: Image::filled(shape, v),
                    label: c,
                });
            }
        }
        let names = (0..classes).map(|c| c.to_string()).collect();
        ImageDataset::new(names, examples).unwrap()
    }

    fn spec(way: usize, shot: usize, query: usize, unlabeled: usize) -> EpisodeSpec {
        EpisodeSpec {
            way,
            shot,
            query,
            unlabeled,
            ..EpisodeSpec::default()
        }
    }

    #[test]
    fn one_shot_sizes() {
        let ds = toy_dataset(10, 40);
        let novel: Vec<usize> = (0..10).collect();
        let ep = sample_episode(&ds, &novel, &spec(5, 1, 15, 0), 1).unwrap();
        assert_eq!(ep.support.len(), 5);
        assert_eq!(ep.query.len(), 75);
        assert!(ep.unlabeled.is_empty());
    }

    #[test]
    fn hundred_unlabeled_per_class() {
        let ds = toy_dataset(6, 130);
        let novel: Vec<usize> = (0..6).collect();
        let ep = sample_episode(&ds, &novel, &spec(5, 5, 15, 100), 2).unwrap();
        assert_eq!(ep.unlabeled.len(), 500);
        assert_eq!(ep.support.len(), 25);
    }

    #[test]
    fn exhausted_class_is_a_sampling_error() {
        let ds = toy_dataset(5, 20);
        let novel: Vec<usize> = (0..5).collect();
        let err = sample_episode(&ds, &novel, &spec(5, 5, 15, 1), 3).unwrap_err();
        assert!(matches!(
            err,
            Error::Sampling {
                needed: 21,
                available: 20,
                ..
            }
        ));
    }

    #[test]
    fn too_few_novel_classes_is_a_config_error() {
        let ds = toy_dataset(4, 30);
        let err = sample_episode(&ds, &[0, 1, 2, 3], &spec(5, 1, 1, 0), 3).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn labels_are_reindexed() {
        let ds = toy_dataset(12, 30);
        let novel = vec![3, 5, 7, 9, 11];
        let ep = sample_episode(&ds, &novel, &spec(5, 2, 3, 4), 8).unwrap();
        let mut labels: Vec<usize> = ep.support.iter().map(|e| e.label).collect();
        labels.dedup();
        assert_eq!(labels, vec![0, 1, 2, 3, 4]);
        for (ex, &idx) in ep.query.iter().zip(&ep.query_indices) {
            assert_eq!(ep.classes[ex.label], ds.example(idx).label);
        }
    }

    #[test]
    fn replace_mode_splits_budget() {
        let s = EpisodeSpec {
            distractor_classes: 1,
            ..spec(5, 1, 15, 30)
        };
        assert_eq!(s.unlabeled_per_class(), (25, 25));
        let add = EpisodeSpec {
            distractor_mode: DistractorMode::Add,
            ..s
        };
        assert_eq!(add.unlabeled_per_class(), (30, 30));
    }

    #[test]
    fn distractors_come_from_other_classes() {
        let ds = toy_dataset(10, 60);
        let novel: Vec<usize> = (0..10).collect();
        let s = EpisodeSpec {
            distractor_classes: 3,
            ..spec(5, 1, 15, 30)
        };
        let ep = sample_episode(&ds, &novel, &s, 21).unwrap();
        assert_eq!(ep.distractor_source_classes.len(), 3);
        for &i in &ep.distractor_indices {
            assert!(!ep.classes.contains(&ds.example(i).label));
        }
        assert_eq!(ep.unlabeled.len() + ep.distractor_unlabeled.len(), 8 * 18);
    }
}
