//! Binary logistic regression by full-batch gradient descent.

use super::{
    check_dataset, require_both_classes, sigmoid, ClassifierModel, ClassifyError, CovidLabel,
    LabeledFeature,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegHyper {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for LogRegHyper {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 200,
            l2: 1e-4,
        }
    }
}

fn target(label: CovidLabel) -> f64 {
    match label {
        CovidLabel::Covid => 1.0,
        CovidLabel::Healthy => 0.0,
    }
}

/// Gradient of mean log-loss + `l2 * ||w||^2 / 2` at `(weights, bias)`.
pub fn logreg_gradient(
    weights: &[f64],
    bias: f64,
    train: &[LabeledFeature],
    l2: f64,
) -> (Vec<f64>, f64) {
    let n = train.len() as f64;
    let mut grad_w = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    for item in train {
        let margin: f64 =
            weights.iter().zip(&item.features).map(|(w, x)| w * x).sum::<f64>() + bias;
        let err = sigmoid(margin) - target(item.label);
        for (g, &x) in grad_w.iter_mut().zip(&item.features) {
            *g += err * x;
        }
        grad_b += err;
    }
    for (g, &w) in grad_w.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    (grad_w, grad_b / n)
}

/// Regularized mean log-loss of `(weights, bias)` on `train`.
pub fn logreg_loss(weights: &[f64], bias: f64, train: &[LabeledFeature], l2: f64) -> f64 {
    let n = train.len() as f64;
    let mut loss = 0.0;
    for item in train {
        let margin: f64 =
            weights.iter().zip(&item.features).map(|(w, x)| w * x).sum::<f64>() + bias;
        let p = sigmoid(margin).clamp(1e-15, 1.0 - 1e-15);
        loss -= if item.label == CovidLabel::Covid {
            p.ln()
        } else {
            (1.0 - p).ln()
        };
    }
    loss / n + l2 * weights.iter().map(|w| w * w).sum::<f64>() / 2.0
}

/// Full-batch gradient descent from zero initialization. Deterministic: no
/// randomness enters training.
pub fn train_logreg(
    train: &[LabeledFeature],
    hyper: &LogRegHyper,
) -> Result<ClassifierModel, ClassifyError> {
    let d = check_dataset(train)?;
    require_both_classes(train)?;
    if !(hyper.learning_rate > 0.0 && hyper.learning_rate.is_finite()) {
        return Err(ClassifyError::InvalidHyper(format!(
            "learning rate {} must be positive",
            hyper.learning_rate
        )));
    }
    if !(hyper.l2 >= 0.0 && hyper.l2.is_finite()) {
        return Err(ClassifyError::InvalidHyper(format!(
            "l2 {} must be non-negative",
            hyper.l2
        )));
    }

    let mut weights = vec![0.0; d];
    let mut bias = 0.0;
    for _ in 0..hyper.epochs {
        let (grad_w, grad_b) = logreg_gradient(&weights, bias, train, hyper.l2);
        for (w, g) in weights.iter_mut().zip(&grad_w) {
            *w -= hyper.learning_rate * g;
        }
        bias -= hyper.learning_rate * grad_b;
    }
    Ok(ClassifierModel::LogisticRegression { weights, bias })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn feature(values: &[f64], label: CovidLabel, subject: &str) -> LabeledFeature {
        LabeledFeature::new(values.to_vec(), label, subject, 0).unwrap()
    }

    fn separable_pair() -> Vec<LabeledFeature> {
        vec![
            feature(&[1.0, 0.0], CovidLabel::Covid, "a"),
            feature(&[-1.0, 0.0], CovidLabel::Healthy, "b"),
        ]
    }

    #[test]
    fn separable_pair_is_learned() {
        let model = train_logreg(&separable_pair(), &LogRegHyper::default()).unwrap();
        let (covid, score_c) = model.predict(&[1.0, 0.0]).unwrap();
        let (healthy, score_h) = model.predict(&[-1.0, 0.0]).unwrap();
        assert_eq!(covid, CovidLabel::Covid);
        assert_eq!(healthy, CovidLabel::Healthy);
        assert!(score_c > 0.9 && score_h < 0.1);
    }

    #[test]
    fn heavy_regularization_crushes_weights() {
        let hyper = LogRegHyper {
            l2: 1e6,
            learning_rate: 1e-6,
            epochs: 200,
        };
        let model = train_logreg(&separable_pair(), &hyper).unwrap();
        let ClassifierModel::LogisticRegression { weights, .. } = model else {
            unreachable!()
        };
        let norm: f64 = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        assert!(norm < 1e-3, "||w|| = {norm}");
    }

    #[test]
    fn gradient_at_zero_matches_closed_form() {
        // At w=0, b=0 the model outputs 0.5 everywhere, so the data term of
        // the gradient is the mean of (0.5 - y) * x.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let train: Vec<LabeledFeature> = (0..20)
            .map(|i| {
                let values: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let label = if i % 2 == 0 {
                    CovidLabel::Covid
                } else {
                    CovidLabel::Healthy
                };
                feature(&values, label, &format!("s{i}"))
            })
            .collect();
        let (grad_w, grad_b) = logreg_gradient(&[0.0; 5], 0.0, &train, 0.0);

        let mut expect = vec![0.0; 5];
        let mut expect_b = 0.0;
        for item in &train {
            let err = 0.5 - target(item.label);
            for (e, &x) in expect.iter_mut().zip(&item.features) {
                *e += err * x / 20.0;
            }
            expect_b += err / 20.0;
        }
        for (g, e) in grad_w.iter().zip(&expect) {
            assert!((g - e).abs() < 1e-12);
        }
        assert!((grad_b - expect_b).abs() < 1e-12);
    }

    #[test]
    fn loss_is_monotone_under_small_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let train: Vec<LabeledFeature> = (0..30)
            .map(|i| {
                let values: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let label = if i % 2 == 0 {
                    CovidLabel::Covid
                } else {
                    CovidLabel::Healthy
                };
                feature(&values, label, &format!("s{i}"))
            })
            .collect();
        let (lr, l2) = (1e-3, 1e-4);
        let mut weights = vec![0.0; 8];
        let mut bias = 0.0;
        let mut prev = logreg_loss(&weights, bias, &train, l2);
        for _ in 0..200 {
            let (grad_w, grad_b) = logreg_gradient(&weights, bias, &train, l2);
            for (w, g) in weights.iter_mut().zip(&grad_w) {
                *w -= lr * g;
            }
            bias -= lr * grad_b;
            let loss = logreg_loss(&weights, bias, &train, l2);
            assert!(loss <= prev + 1e-12, "loss rose from {prev} to {loss}");
            prev = loss;
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let train = vec![
            feature(&[1.0], CovidLabel::Covid, "a"),
            feature(&[2.0], CovidLabel::Covid, "b"),
        ];
        assert!(matches!(
            train_logreg(&train, &LogRegHyper::default()),
            Err(ClassifyError::SingleClass)
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let model_a = train_logreg(&separable_pair(), &LogRegHyper::default()).unwrap();
        let model_b = train_logreg(&separable_pair(), &LogRegHyper::default()).unwrap();
        assert_eq!(model_a, model_b);
    }
}
