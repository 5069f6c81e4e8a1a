use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::image::Image;
use crate::rng::{self, Rng};

/// Random reflect-pad-and-crop followed by an optional horizontal flip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationPolicy {
    pub pad_crop_pixels: usize,
    pub horizontal_flip_probability: f64,
    pub rng_seed: u64,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        Self {
            pad_crop_pixels: 2,
            horizontal_flip_probability: 0.5,
            rng_seed: 0,
        }
    }
}

impl AugmentationPolicy {
    pub const IDENTITY: AugmentationPolicy = AugmentationPolicy {
        pad_crop_pixels: 0,
        horizontal_flip_probability: 0.0,
        rng_seed: 0,
    };

    pub fn is_identity(&self) -> bool {
        self.pad_crop_pixels == 0 && self.horizontal_flip_probability <= 0.0
    }
}

/// Augments `image` with a generator derived from the policy seed and `draw_seed`.
pub fn augment(image: &Image, policy: &AugmentationPolicy, draw_seed: u64) -> Image {
    let mut rng = rng::seeded(rng::derive_seed(policy.rng_seed, draw_seed));
    augment_with(image, policy, &mut rng)
}

/// Augments `image` drawing offsets and the flip from `rng`.
///
/// Padding larger than the image is clamped so that reflection stays in bounds.
pub fn augment_with(image: &Image, policy: &AugmentationPolicy, rng: &mut Rng) -> Image {
    let shape = image.shape();
    let pad_y = policy.pad_crop_pixels.min(shape.height.saturating_sub(1));
    let pad_x = policy.pad_crop_pixels.min(shape.width.saturating_sub(1));
    let dy = if pad_y > 0 { rng.random_range(0..=2 * pad_y) } else { 0 };
    let dx = if pad_x > 0 { rng.random_range(0..=2 * pad_x) } else { 0 };
    let flip = policy.horizontal_flip_probability > 0.0 && rng.random::<f64>() < policy.horizontal_flip_probability;
    if dy == pad_y && dx == pad_x && !flip {
        return image.clone();
    }
    let mut out = image.clone();
    let data = out.data_mut();
    let mut k = 0;
    for c in 0..shape.channels {
        for y in 0..shape.height {
            let sy = reflect(y as isize + dy as isize - pad_y as isize, shape.height);
            for x in 0..shape.width {
                let xx = if flip { shape.width - 1 - x } else { x };
                let sx = reflect(xx as isize + dx as isize - pad_x as isize, shape.width);
                data[k] = image.get(c, sy, sx);
                k += 1;
            }
        }
    }
    out
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * n - 2 - i
    } else {
        i
    };
    r as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ImageShape;
    use alloc::vec::Vec;

    fn ramp() -> Image {
        let shape = ImageShape::new(2, 4, 5);
        let data: Vec<f64> = (0..shape.len()).map(|i| i as f64 / shape.len() as f64).collect();
        Image::new(shape, data).unwrap()
    }

    #[test]
    fn identity_policy_leaves_image_unchanged() {
        let img = ramp();
        for seed in 0..10 {
            assert_eq!(augment(&img, &AugmentationPolicy::IDENTITY, seed), img);
        }
    }

    #[test]
    fn forced_flip_mirrors() {
        let img = ramp();
        let policy = AugmentationPolicy {
            pad_crop_pixels: 0,
            horizontal_flip_probability: 1.0,
            rng_seed: 4,
        };
        let out = augment(&img, &policy, 0);
        let s = img.shape();
        for c in 0..s.channels {
            for y in 0..s.height {
                for x in 0..s.width {
                    assert_eq!(out.get(c, y, x), img.get(c, y, s.width - 1 - x));
                }
            }
        }
    }

    #[test]
    fn same_draw_seed_same_output() {
        let img = ramp();
        let policy = AugmentationPolicy::default();
        assert_eq!(augment(&img, &policy, 17), augment(&img, &policy, 17));
    }

    #[test]
    fn preserves_shape_and_range() {
        let img = ramp();
        let policy = AugmentationPolicy {
            pad_crop_pixels: 3,
            ..AugmentationPolicy::default()
        };
        for seed in 0..50 {
            let out = augment(&img, &policy, seed);
            assert_eq!(out.shape(), img.shape());
            assert!(out.in_unit_range());
        }
    }

    #[test]
    fn reflection_indices() {
        assert_eq!(reflect(-1, 4), 1);
        assert_eq!(reflect(-2, 4), 2);
        assert_eq!(reflect(4, 4), 2);
        assert_eq!(reflect(5, 4), 1);
        assert_eq!(reflect(2, 4), 2);
    }
}
