//! Procedurally generated image datasets.
//!
//! Each class is a fixed arrangement of Gaussian blobs; instances jitter the
//! blob positions and strengths, add clutter blobs that carry no class
//! information, and add pixel noise. All classes are drawn from the same
//! family, so features learned on some classes transfer to the others.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::{ImageDataset, LabeledExample};
use crate::error::{Error, Result};
use crate::image::{Image, ImageShape};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlobDatasetConfig {
    pub num_classes: usize,
    pub examples_per_class: usize,
    pub shape: ImageShape,
    pub blobs_per_class: usize,
    /// Standard deviation of the per-instance blob displacement, in pixels.
    pub position_jitter: f64,
    /// Per-instance blob amplitude is scaled by a factor in `1 ± amplitude_jitter`.
    pub amplitude_jitter: f64,
    pub clutter_blobs: usize,
    pub pixel_noise: f64,
    pub seed: u64,
}

impl Default for BlobDatasetConfig {
    fn default() -> Self {
        Self {
            num_classes: 64,
            examples_per_class: 100,
            shape: ImageShape::new(1, 16, 16),
            blobs_per_class: 3,
            position_jitter: 1.0,
            amplitude_jitter: 0.3,
            clutter_blobs: 2,
            pixel_noise: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Blob {
    cy: f64,
    cx: f64,
    sigma: f64,
    amplitude: [f64; 4],
}

impl Blob {
    fn random(shape: ImageShape, rng: &mut rng::Rng, lo: f64, hi: f64) -> Blob {
        let margin = 2.0;
        let mut amplitude = [0.0; 4];
        for a in amplitude.iter_mut().take(shape.channels.min(4)) {
            let magnitude = rng.random_range(lo..hi);
            *a = if rng.random::<bool>() { magnitude } else { -magnitude };
        }
        Blob {
            cy: rng.random_range(margin..(shape.height as f64 - 1.0 - margin).max(margin + 1e-9)),
            cx: rng.random_range(margin..(shape.width as f64 - 1.0 - margin).max(margin + 1e-9)),
            sigma: rng.random_range(1.0..2.2),
            amplitude,
        }
    }

    fn paint(&self, canvas: &mut [f64], shape: ImageShape, gain: f64) {
        let inv = 1.0 / (2.0 * self.sigma * self.sigma);
        for c in 0..shape.channels {
            let amp = self.amplitude[c % 4] * gain;
            for y in 0..shape.height {
                let dy = y as f64 - self.cy;
                for x in 0..shape.width {
                    let dx = x as f64 - self.cx;
                    canvas[(c * shape.height + y) * shape.width + x] += amp * libm::exp(-(dy * dy + dx * dx) * inv);
                }
            }
        }
    }
}

/// Generates a blob dataset; the same config always yields the same images.
pub fn generate_blob_dataset(config: &BlobDatasetConfig) -> Result<ImageDataset> {
    if config.num_classes == 0 || config.examples_per_class == 0 || config.shape.is_empty() {
        return Err(Error::Config(
            "blob dataset needs classes, examples and a non-empty shape".into(),
        ));
    }
    if config.shape.channels > 4 {
        return Err(Error::Config("blob dataset supports at most 4 channels".into()));
    }
    let shape = config.shape;
    let mut class_rng = rng::seeded(rng::derive_seed(config.seed, 0));
    let prototypes: Vec<Vec<Blob>> = (0..config.num_classes)
        .map(|_| {
            (0..config.blobs_per_class)
                .map(|_| Blob::random(shape, &mut class_rng, 0.25, 0.45))
                .collect()
        })
        .collect();

    let jitter = Normal::new(0.0, config.position_jitter.max(0.0))
        .map_err(|e| Error::Config(alloc::format!("position jitter: {e}")))?;
    let noise =
        Normal::new(0.0, config.pixel_noise.max(0.0)).map_err(|e| Error::Config(alloc::format!("pixel noise: {e}")))?;

    let mut examples = Vec::with_capacity(config.num_classes * config.examples_per_class);
    for (label, blobs) in prototypes.iter().enumerate() {
        let mut rng = rng::seeded(rng::derive_seed(config.seed, 1 + label as u64));
        for _ in 0..config.examples_per_class {
            let mut canvas = vec![0.5; shape.len()];
            for blob in blobs {
                let moved = Blob {
                    cy: blob.cy + jitter.sample(&mut rng),
                    cx: blob.cx + jitter.sample(&mut rng),
                    ..*blob
                };
                let gain = 1.0 + config.amplitude_jitter * (2.0 * rng.random::<f64>() - 1.0);
                moved.paint(&mut canvas, shape, gain);
            }
            for _ in 0..config.clutter_blobs {
                Blob::random(shape, &mut rng, 0.1, 0.3).paint(&mut canvas, shape, 1.0);
            }
            for v in canvas.iter_mut() {
                *v = (*v + noise.sample(&mut rng)).clamp(0.0, 1.0);
            }
            examples.push(LabeledExample {
                image: Image::new(shape, canvas)?,
                label,
            });
        }
    }
    let names = (0..config.num_classes)
        .map(|c| alloc::format!("blob{c:03}"))
        .collect::<Vec<String>>();
    ImageDataset::new(names, examples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_and_in_range() {
        let cfg = BlobDatasetConfig {
            num_classes: 4,
            examples_per_class: 5,
            ..BlobDatasetConfig::default()
        };
        let a = generate_blob_dataset(&cfg).unwrap();
        let b = generate_blob_dataset(&cfg).unwrap();
        assert_eq!(a.len(), 20);
        assert_eq!(a.examples(), b.examples());
        assert!(a.examples().iter().all(|e| e.image.in_unit_range()));
    }
}
