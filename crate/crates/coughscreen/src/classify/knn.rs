//! k-nearest-neighbors with deterministic tie handling.

use super::{check_dataset, ClassifierModel, ClassifyError, CovidLabel, LabeledFeature};

/// Store the (already standardized) training set. `k` must be odd so label
/// votes cannot tie, and no larger than the training set.
pub fn train_knn(train: &[LabeledFeature], k: usize) -> Result<ClassifierModel, ClassifyError> {
    check_dataset(train)?;
    if k == 0 || k % 2 == 0 {
        return Err(ClassifyError::KEven { k });
    }
    if k > train.len() {
        return Err(ClassifyError::KTooLarge { k, n: train.len() });
    }
    Ok(ClassifierModel::Knn {
        k,
        points: train.iter().map(|t| t.features.clone()).collect(),
        labels: train.iter().map(|t| t.label).collect(),
    })
}

/// Fraction of covid votes among the k nearest neighbors of `query`.
/// Neighbors are ordered by squared Euclidean distance; exact distance ties
/// resolve to the lower training index.
pub(super) fn vote_fraction(
    points: &[Vec<f64>],
    labels: &[CovidLabel],
    k: usize,
    query: &[f64],
) -> Result<f64, ClassifyError> {
    let d = points[0].len();
    if query.len() != d {
        return Err(ClassifyError::DimensionMismatch {
            expected: d,
            got: query.len(),
        });
    }
    let mut by_distance: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let d2: f64 = p
                .iter()
                .zip(query)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (d2, i)
        })
        .collect();
    by_distance.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let covid = by_distance[..k]
        .iter()
        .filter(|&&(_, i)| labels[i] == CovidLabel::Covid)
        .count();
    Ok(covid as f64 / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn feature(values: &[f64], label: CovidLabel, subject: &str) -> LabeledFeature {
        LabeledFeature::new(values.to_vec(), label, subject, 0).unwrap()
    }

    #[test]
    fn even_or_oversized_k_is_rejected() {
        let train = vec![
            feature(&[0.0], CovidLabel::Covid, "a"),
            feature(&[1.0], CovidLabel::Healthy, "b"),
        ];
        assert!(matches!(train_knn(&train, 2), Err(ClassifyError::KEven { k: 2 })));
        assert!(matches!(
            train_knn(&train, 3),
            Err(ClassifyError::KTooLarge { k: 3, n: 2 })
        ));
    }

    #[test]
    fn k1_reproduces_distinct_training_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let train: Vec<LabeledFeature> = (0..10)
            .map(|i| {
                let values: Vec<f64> = (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect();
                let label = if i % 2 == 0 {
                    CovidLabel::Covid
                } else {
                    CovidLabel::Healthy
                };
                feature(&values, label, &format!("s{i}"))
            })
            .collect();
        let model = train_knn(&train, 1).unwrap();
        for item in &train {
            let (label, _) = model.predict(&item.features).unwrap();
            assert_eq!(label, item.label);
        }
    }

    #[test]
    fn equidistant_majority_wins_with_k3() {
        // One covid and two healthy points, all at distance 1 from origin.
        let train = vec![
            feature(&[1.0, 0.0], CovidLabel::Covid, "a"),
            feature(&[-1.0, 0.0], CovidLabel::Healthy, "b"),
            feature(&[0.0, 1.0], CovidLabel::Healthy, "c"),
        ];
        let model = train_knn(&train, 3).unwrap();
        let (label, score) = model.predict(&[0.0, 0.0]).unwrap();
        assert_eq!(label, CovidLabel::Healthy);
        assert!((score - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn distance_ties_resolve_to_the_lower_index() {
        // Equidistant covid (index 0) and healthy (index 1) points; k=1 must
        // use the covid point.
        let train = vec![
            feature(&[1.0], CovidLabel::Covid, "a"),
            feature(&[-1.0], CovidLabel::Healthy, "b"),
            feature(&[5.0], CovidLabel::Healthy, "c"),
        ];
        let model = train_knn(&train, 1).unwrap();
        let (label, score) = model.predict(&[0.0]).unwrap();
        assert_eq!(label, CovidLabel::Covid);
        assert_eq!(score, 1.0);
    }

    #[test]
    fn unanimous_vote_scores_one() {
        let train = vec![
            feature(&[0.0], CovidLabel::Covid, "a"),
            feature(&[0.1], CovidLabel::Covid, "b"),
            feature(&[0.2], CovidLabel::Covid, "c"),
            feature(&[9.0], CovidLabel::Healthy, "d"),
        ];
        let model = train_knn(&train, 3).unwrap();
        let (label, score) = model.predict(&[0.05]).unwrap();
        assert_eq!(label, CovidLabel::Covid);
        assert_eq!(score, 1.0);
    }

    #[test]
    fn predictions_match_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let train: Vec<LabeledFeature> = (0..30)
                .map(|i| {
                    let values: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let label = if rng.gen_bool(0.5) {
                        CovidLabel::Covid
                    } else {
                        CovidLabel::Healthy
                    };
                    feature(&values, label, &format!("s{i}"))
                })
                .collect();
            let model = train_knn(&train, 5).unwrap();
            for _ in 0..10 {
                let query: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let (label, score) = model.predict(&query).unwrap();

                // Oracle: full distance sort with the same tie rule.
                let mut order: Vec<(f64, usize)> = train
                    .iter()
                    .enumerate()
                    .map(|(i, t)| {
                        let d2: f64 = t
                            .features
                            .iter()
                            .zip(&query)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum();
                        (d2, i)
                    })
                    .collect();
                order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                let covid = order[..5]
                    .iter()
                    .filter(|&&(_, i)| train[i].label == CovidLabel::Covid)
                    .count();
                assert_eq!(score, covid as f64 / 5.0);
                let expect = if covid * 2 >= 5 {
                    CovidLabel::Covid
                } else {
                    CovidLabel::Healthy
                };
                assert_eq!(label, expect);
            }
        }
    }
}
