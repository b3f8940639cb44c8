//! Linear soft-margin SVM trained by subgradient descent.

use super::{
    check_dataset, require_both_classes, ClassifierModel, ClassifyError, CovidLabel, LabeledFeature,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmHyper {
    pub learning_rate: f64,
    pub epochs: usize,
    pub c: f64,
}

impl Default for SvmHyper {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 300,
            c: 1.0,
        }
    }
}

fn signed(label: CovidLabel) -> f64 {
    match label {
        CovidLabel::Covid => 1.0,
        CovidLabel::Healthy => -1.0,
    }
}

/// Primal objective `||w||^2 / 2 + C * mean hinge(y * (w.x + b))`.
pub fn svm_objective(weights: &[f64], bias: f64, train: &[LabeledFeature], c: f64) -> f64 {
    let reg: f64 = weights.iter().map(|w| w * w).sum::<f64>() / 2.0;
    let hinge: f64 = train
        .iter()
        .map(|item| {
            let margin: f64 = weights
                .iter()
                .zip(&item.features)
                .map(|(w, x)| w * x)
                .sum::<f64>()
                + bias;
            (1.0 - signed(item.label) * margin).max(0.0)
        })
        .sum::<f64>()
        / train.len() as f64;
    reg + c * hinge
}

/// Subgradient of the objective at `(weights, bias)`. Examples with margin
/// exactly 1 contribute nothing (the zero element of the subdifferential).
pub fn svm_subgradient(
    weights: &[f64],
    bias: f64,
    train: &[LabeledFeature],
    c: f64,
) -> (Vec<f64>, f64) {
    let n = train.len() as f64;
    let mut grad_w = weights.to_vec();
    let mut grad_b = 0.0;
    for item in train {
        let y = signed(item.label);
        let margin: f64 = weights
            .iter()
            .zip(&item.features)
            .map(|(w, x)| w * x)
            .sum::<f64>()
            + bias;
        if y * margin < 1.0 {
            for (g, &x) in grad_w.iter_mut().zip(&item.features) {
                *g -= c * y * x / n;
            }
            grad_b -= c * y / n;
        }
    }
    (grad_w, grad_b)
}

/// Deterministic subgradient descent from zero initialization. The score
/// reported by the resulting model is `sigmoid(w.x + b)`, a fixed
/// calibration of the margin onto `[0, 1]`.
pub fn train_svm(
    train: &[LabeledFeature],
    hyper: &SvmHyper,
) -> Result<ClassifierModel, ClassifyError> {
    let d = check_dataset(train)?;
    require_both_classes(train)?;
    if !(hyper.learning_rate > 0.0 && hyper.learning_rate.is_finite()) {
        return Err(ClassifyError::InvalidHyper(format!(
            "learning rate {} must be positive",
            hyper.learning_rate
        )));
    }
    if !(hyper.c >= 0.0 && hyper.c.is_finite()) {
        return Err(ClassifyError::InvalidHyper(format!(
            "C {} must be non-negative",
            hyper.c
        )));
    }

    let mut weights = vec![0.0; d];
    let mut bias = 0.0;
    for _ in 0..hyper.epochs {
        let (grad_w, grad_b) = svm_subgradient(&weights, bias, train, hyper.c);
        for (w, g) in weights.iter_mut().zip(&grad_w) {
            *w -= hyper.learning_rate * g;
        }
        bias -= hyper.learning_rate * grad_b;
    }
    Ok(ClassifierModel::LinearSvm { weights, bias })
}
