use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand_distr::{Beta, Distribution};

use crate::data::{augment_with, AugmentationPolicy};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::{Classifier, FeatureExtractor, Head};
use crate::prob::ProbVector;
use crate::rng::Rng;

/// An image paired with its (soft) target.
pub type Targeted = (Image, ProbVector);

/// Output of MixUp.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedExample {
    pub image: Image,
    pub target: ProbVector,
}

/// Raises each entry to `1 / temperature` and renormalizes.
pub fn sharpen(p: &ProbVector, temperature: f64) -> Result<ProbVector> {
    if !(temperature > 0.0) {
        return Err(Error::Config(alloc::format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let max = p.max();
    let exponent = 1.0 / temperature;
    let powered: Vec<f64> = p.entries().iter().map(|v| libm::pow(v / max, exponent)).collect();
    let total: f64 = powered.iter().sum();
    Ok(ProbVector::new_unchecked(
        powered.into_iter().map(|v| v / total).collect(),
    ))
}

/// Averages the model's predictions over `m` augmented copies of `image` and
/// sharpens the mean.
///
/// The model is only read, so no gradient can reach it through the guess.
pub fn guess_label<E: FeatureExtractor, H: Head>(
    model: &Classifier<E, H>,
    image: &Image,
    m: usize,
    temperature: f64,
    policy: &AugmentationPolicy,
    rng: &mut Rng,
) -> Result<ProbVector> {
    let (_, guess) = guess_with_copies(model, image, m, temperature, policy, rng)?;
    Ok(guess)
}

/// Like [`guess_label`] but also returns the augmented copies.
pub(crate) fn guess_with_copies<E: FeatureExtractor, H: Head>(
    model: &Classifier<E, H>,
    image: &Image,
    m: usize,
    temperature: f64,
    policy: &AugmentationPolicy,
    rng: &mut Rng,
) -> Result<(Vec<Image>, ProbVector)> {
    if m == 0 {
        return Err(Error::Config("label guessing needs at least one augmentation".into()));
    }
    let mut mean = alloc::vec![0.0; model.way()];
    let mut copies = Vec::with_capacity(m);
    for _ in 0..m {
        let copy = augment_with(image, policy, rng);
        let p = model.predict(&copy)?;
        for (acc, v) in mean.iter_mut().zip(p.entries()) {
            *acc += v / m as f64;
        }
        copies.push(copy);
    }
    let guess = sharpen(&ProbVector::new_unchecked(mean), temperature)?;
    Ok((copies, guess))
}

/// MixUp with `lambda' = max(lambda, 1 - lambda)`, so the first argument always
/// carries at least half the weight.
pub fn mixup(a: (&Image, &ProbVector), b: (&Image, &ProbVector), lambda: f64) -> Result<MixedExample> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Contract(alloc::format!(
            "MixUp coefficient {lambda} outside [0, 1]"
        )));
    }
    if a.1.len() != b.1.len() {
        return Err(Error::Contract("MixUp targets differ in length".into()));
    }
    let weight = lambda.max(1.0 - lambda);
    let image = Image::blend(a.0, b.0, weight)?;
    let target =
        a.1.entries()
            .iter()
            .zip(b.1.entries())
            .map(|(p, q)| weight * p + (1.0 - weight) * q)
            .collect();
    Ok(MixedExample {
        image,
        target: ProbVector::new_unchecked(target),
    })
}

/// The two mixed halves of a MixMatch batch.
#[derive(Debug, Clone)]
pub struct MixMatchBatch {
    /// `MixUp(L_i, W_i)`.
    pub labeled: Vec<MixedExample>,
    /// `MixUp(U_i, W_{|L| + i})`.
    pub unlabeled: Vec<MixedExample>,
    /// `W` as indices into `L ++ U`.
    pub partners: Vec<usize>,
    pub lambdas: Vec<f64>,
}

/// Shuffles `L ++ U` into partners `W` and mixes each example with its partner,
/// drawing every coefficient from `Beta(alpha, alpha)`.
pub fn build_mixmatch_batch(
    labeled: &[Targeted],
    unlabeled: &[Targeted],
    alpha: f64,
    rng: &mut Rng,
) -> Result<MixMatchBatch> {
    if labeled.is_empty() {
        return Err(Error::Config("MixMatch needs at least one labeled example".into()));
    }
    let beta = Beta::new(alpha, alpha).map_err(|e| Error::Config(alloc::format!("Beta({alpha}, {alpha}): {e}")))?;
    let total = labeled.len() + unlabeled.len();
    let mut partners: Vec<usize> = (0..total).collect();
    partners.shuffle(rng);
    let lambdas: Vec<f64> = (0..total).map(|_| beta.sample(rng)).collect();
    mix_with_partners(labeled, unlabeled, partners, lambdas)
}

/// Deterministic core of [`build_mixmatch_batch`] with given partners and coefficients.
pub fn mix_with_partners(
    labeled: &[Targeted],
    unlabeled: &[Targeted],
    partners: Vec<usize>,
    lambdas: Vec<f64>,
) -> Result<MixMatchBatch> {
    let total = labeled.len() + unlabeled.len();
    if partners.len() != total || lambdas.len() != total {
        return Err(Error::Contract(
            "partner and coefficient counts must equal |L| + |U|".into(),
        ));
    }
    let pick = |i: usize| -> &Targeted {
        if i < labeled.len() {
            &labeled[i]
        } else {
            &unlabeled[i - labeled.len()]
        }
    };
    let mut mixed = Vec::with_capacity(total);
    for i in 0..total {
        let own = pick(i);
        let partner = pick(partners[i]);
        mixed.push(mixup((&own.0, &own.1), (&partner.0, &partner.1), lambdas[i])?);
    }
    let unlabeled_mixed = mixed.split_off(labeled.len());
    Ok(MixMatchBatch {
        labeled: mixed,
        unlabeled: unlabeled_mixed,
        partners,
        lambdas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ImageShape;
    use crate::rng::seeded;
    use alloc::vec;

    fn scalar(v: f64) -> Image {
        Image::filled(ImageShape::new(1, 1, 1), v)
    }

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn sharpen_examples() {
        let even = sharpen(&pv(&[0.5, 0.5]), 0.5).unwrap();
        assert_eq!(even.entries(), &[0.5, 0.5]);
        let hot = sharpen(&pv(&[1.0, 0.0]), 0.3).unwrap();
        assert_eq!(hot.entries(), &[1.0, 0.0]);
        // (0.64, 0.04) / 0.68
        let s = sharpen(&pv(&[0.8, 0.2]), 0.5).unwrap();
        assert!((s.entries()[0] - 0.9412).abs() < 1e-4);
        assert!((s.entries()[1] - 0.0588).abs() < 1e-4);
    }

    #[test]
    fn sharpen_rejects_non_positive_temperature() {
        assert!(matches!(sharpen(&pv(&[0.5, 0.5]), 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn mixup_examples() {
        let a = pv(&[1.0, 0.0]);
        let b = pv(&[0.0, 1.0]);
        let m = mixup((&scalar(0.2), &a), (&scalar(0.9), &b), 1.0).unwrap();
        assert_eq!(m.image, scalar(0.2));
        assert_eq!(m.target, a);
        let m = mixup((&scalar(0.0), &a), (&scalar(1.0), &b), 0.3).unwrap();
        assert!((m.image.data()[0] - 0.3).abs() < 1e-15);
        assert!((m.target.entries()[0] - 0.7).abs() < 1e-15);
        let m = mixup((&scalar(2.0), &a), (&scalar(4.0), &b), 0.5).unwrap();
        assert_eq!(m.image.data()[0], 3.0);
    }

    #[test]
    fn mixup_shape_mismatch() {
        let a = pv(&[1.0]);
        let big = Image::filled(ImageShape::new(1, 2, 1), 0.0);
        assert!(matches!(
            mixup((&scalar(0.0), &a), (&big, &a), 0.4),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn batch_sizes() {
        let l: Vec<Targeted> = (0..2).map(|i| (scalar(i as f64 / 10.0), pv(&[1.0, 0.0]))).collect();
        let u: Vec<Targeted> = (0..3)
            .map(|i| (scalar(0.5 + i as f64 / 10.0), pv(&[0.3, 0.7])))
            .collect();
        let batch = build_mixmatch_batch(&l, &u, 0.75, &mut seeded(1)).unwrap();
        assert_eq!(batch.labeled.len(), 2);
        assert_eq!(batch.unlabeled.len(), 3);
    }

    #[test]
    fn unit_lambdas_reproduce_inputs() {
        let l: Vec<Targeted> = (0..2).map(|i| (scalar(i as f64 / 10.0), pv(&[1.0, 0.0]))).collect();
        let u: Vec<Targeted> = (0..3)
            .map(|i| (scalar(0.5 + i as f64 / 10.0), pv(&[0.3, 0.7])))
            .collect();
        let batch = mix_with_partners(&l, &u, vec![4, 3, 2, 1, 0], vec![1.0; 5]).unwrap();
        for (m, (img, t)) in batch.labeled.iter().zip(&l) {
            assert_eq!(&m.image, img);
            assert_eq!(&m.target, t);
        }
        for (m, (img, t)) in batch.unlabeled.iter().zip(&u) {
            assert_eq!(&m.image, img);
            assert_eq!(&m.target, t);
        }
    }

    #[test]
    fn empty_labeled_batch_rejected() {
        let u: Vec<Targeted> = vec![(scalar(0.5), pv(&[0.5, 0.5]))];
        assert!(matches!(
            build_mixmatch_batch(&[], &u, 0.75, &mut seeded(0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn empty_unlabeled_batch_is_supervised_mixup() {
        let l: Vec<Targeted> = (0..4)
            .map(|i| (scalar(i as f64 / 4.0), ProbVector::one_hot(4, i)))
            .collect();
        let batch = build_mixmatch_batch(&l, &[], 0.75, &mut seeded(2)).unwrap();
        assert_eq!(batch.labeled.len(), 4);
        assert!(batch.unlabeled.is_empty());
        assert!(batch.partners.iter().all(|&p| p < 4));
    }
}
