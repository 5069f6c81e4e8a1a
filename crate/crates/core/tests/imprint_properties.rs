//! Imprinting invariances, the nearest-support oracle and cosine-score properties.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transmatch_core::imprint::{imprint_weights, ImprintMode, SupportEmbeddings};
use transmatch_core::model::{cosine_scores, normalize, CosineHead};
use transmatch_core::Error;

fn vec_strategy(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, dim)
        .prop_filter("non-degenerate", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3)
}

fn class_strategy(dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(vec_strategy(dim), 1..5)
}

fn support_strategy() -> impl Strategy<Value = Vec<Vec<Vec<f64>>>> {
    prop::collection::vec(class_strategy(5), 2..5)
}

fn rows(head: &CosineHead) -> Vec<Vec<f64>> {
    head.rows().map(<[f64]>::to_vec).collect()
}

fn close(a: &[Vec<f64>], b: &[Vec<f64>], tol: f64) -> bool {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .all(|(x, y)| (x - y).abs() < tol)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (norm(a) * norm(b))
}

/// Lowest index among the maxima.
fn first_argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

proptest! {
    #[test]
    fn rows_are_unit_norm(support in support_strategy()) {
        // Skip classes whose normalized embeddings cancel.
        if let Ok(head) = imprint_weights(&SupportEmbeddings::new(support).unwrap(), ImprintMode::NormalizedMean, 10.0) {
            for r in head.rows() {
                prop_assert!((norm(r) - 1.0).abs() < 1e-6);
            }
            prop_assert_eq!(head.scale(), 10.0);
        }
    }

    #[test]
    fn shuffling_a_class_leaves_its_weight_unchanged(support in support_strategy(), seed in any::<u64>()) {
        let base = imprint_weights(&SupportEmbeddings::new(support.clone()).unwrap(), ImprintMode::NormalizedMean, 1.0);
        let mut shuffled = support;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for class in &mut shuffled {
            for i in (1..class.len()).rev() {
                class.swap(i, rng.random_range(0..=i));
            }
        }
        let other = imprint_weights(&SupportEmbeddings::new(shuffled).unwrap(), ImprintMode::NormalizedMean, 1.0);
        if let (Ok(a), Ok(b)) = (base, other) {
            prop_assert!(close(&rows(&a), &rows(&b), 1e-9));
        }
    }

    #[test]
    fn duplicating_every_embedding_leaves_weights_unchanged(support in support_strategy()) {
        let doubled: Vec<Vec<Vec<f64>>> = support
            .iter()
            .map(|class| class.iter().flat_map(|e| [e.clone(), e.clone()]).collect())
            .collect();
        for mode in [ImprintMode::NormalizedMean, ImprintMode::RawMean] {
            let a = imprint_weights(&SupportEmbeddings::new(support.clone()).unwrap(), mode, 1.0);
            let b = imprint_weights(&SupportEmbeddings::new(doubled.clone()).unwrap(), mode, 1.0);
            if let (Ok(a), Ok(b)) = (a, b) {
                prop_assert!(close(&rows(&a), &rows(&b), 1e-9));
            }
        }
    }

    #[test]
    fn cosine_scores_ignore_positive_rescaling(
        w in prop::collection::vec(vec_strategy(6), 2..5),
        x in vec_strategy(6),
        factor in 1e-3f64..1e3,
        scale in 0.5f64..20.0,
    ) {
        let head = CosineHead::from_rows(&w, scale).unwrap();
        let a = cosine_scores(&head, &x).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| v * factor).collect();
        let b = cosine_scores(&head, &scaled).unwrap();
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() < 1e-6);
            prop_assert!(p.abs() <= scale + 1e-9);
        }
        prop_assert_eq!(first_argmax(&a), first_argmax(&b));
    }
}

#[test]
fn two_orthogonal_shots_give_the_diagonal() {
    let support = SupportEmbeddings::new(vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]]).unwrap();
    let head = imprint_weights(&support, ImprintMode::NormalizedMean, 10.0).unwrap();
    let h = 0.5f64.sqrt();
    assert!((head.row(0)[0] - h).abs() < 1e-12 && (head.row(0)[1] - h).abs() < 1e-12);
}

#[test]
fn single_unit_shot_is_its_own_weight() {
    let e = normalize(&[0.3, -0.4, 1.2]).unwrap();
    let head = imprint_weights(
        &SupportEmbeddings::new(vec![vec![e.clone()]]).unwrap(),
        ImprintMode::NormalizedMean,
        10.0,
    )
    .unwrap();
    for (a, b) in head.row(0).iter().zip(&e) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn opposite_shots_are_a_degenerate_class() {
    let support = SupportEmbeddings::new(vec![vec![vec![1.0, 0.0]], vec![vec![0.5, 0.5], vec![-0.5, -0.5]]]).unwrap();
    match imprint_weights(&support, ImprintMode::NormalizedMean, 10.0) {
        Err(Error::DegenerateClass { class, .. }) => assert_eq!(class, 1),
        other => panic!("expected a degenerate class error, got {other:?}"),
    }
}

#[test]
fn cosine_score_examples() {
    let head = CosineHead::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], 1.0).unwrap();
    let parallel = cosine_scores(&head, &[2.5, 0.0]).unwrap();
    assert!((parallel[0] - 1.0).abs() < 1e-12);
    assert!(parallel[1].abs() < 1e-12);
    assert!(cosine_scores(&head, &[0.0, 0.0]).is_err());
}

/// With one shot per class, the imprinted cosine classifier picks the class
/// whose support embedding is most cosine-similar to the query.
#[test]
fn one_shot_imprinting_equals_nearest_support_by_cosine() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut agreements = 0;
    for _ in 0..200 {
        let dim = rng.random_range(2..=8);
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            loop {
                let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                if norm(&v) > 1e-2 {
                    return v;
                }
            }
        };
        let shots: Vec<Vec<f64>> = (0..3).map(|_| draw(&mut rng)).collect();
        let query = draw(&mut rng);
        let support = SupportEmbeddings::new(shots.iter().map(|s| vec![s.clone()]).collect()).unwrap();
        let head = imprint_weights(&support, ImprintMode::NormalizedMean, 1.0).unwrap();
        let predicted = first_argmax(&cosine_scores(&head, &query).unwrap());
        let similarities: Vec<f64> = shots.iter().map(|s| cosine(s, &query)).collect();
        if predicted == first_argmax(&similarities) {
            agreements += 1;
        }
    }
    assert_eq!(agreements, 200);
}
