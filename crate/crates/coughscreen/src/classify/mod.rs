//! Shallow classifiers over transfer features, plus the subject-aware
//! evaluation harness.
//!
//! The pipeline standardizes 1024-dim feature vectors per dimension (fit on
//! training data only) and hands them to four classifiers: logistic
//! regression, k-nearest-neighbors, a linear SVM, and a random forest. All
//! four share the [`ClassifierModel`] enum and a common `(label, score)`
//! prediction interface where `score` is a covid probability in `[0, 1]`
//! and exact 0.5 resolves to covid.

pub mod forest;
pub mod knn;
pub mod logreg;
pub mod split;
pub mod svm;

pub use forest::{train_forest, ForestHyper, Tree};
pub use knn::train_knn;
pub use logreg::{train_logreg, LogRegHyper};
pub use split::{cross_validate, split_by_subject, stratified_subject_folds, SubjectSplit};
pub use svm::{train_svm, SvmHyper};

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use thiserror::Error;

/// Floor applied to per-dimension standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("training set contains a single class")]
    SingleClass,
    #[error("k = {k} exceeds the {n} training samples")]
    KTooLarge { k: usize, n: usize },
    #[error("k = {k} must be odd")]
    KEven { k: usize },
    #[error("class {label} has {have} subject(s), need at least {need}")]
    TooFewSubjects {
        label: CovidLabel,
        have: usize,
        need: usize,
    },
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(String),
    #[error("features contain a non-finite value")]
    NonFinite,
    #[error("bad classifier file: {0}")]
    BadModelFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Binary target label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovidLabel {
    Covid,
    Healthy,
}

impl CovidLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            CovidLabel::Covid => "covid",
            CovidLabel::Healthy => "healthy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "covid" => Some(CovidLabel::Covid),
            "healthy" => Some(CovidLabel::Healthy),
            _ => None,
        }
    }
}

impl fmt::Display for CovidLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One labeled feature vector with its provenance. The production pipeline
/// always uses 1024 features; the classifiers themselves are
/// dimension-generic and only require consistency within a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledFeature {
    pub features: Vec<f64>,
    pub label: CovidLabel,
    pub subject_id: String,
    pub day_index: u32,
}

impl LabeledFeature {
    pub fn new(
        features: Vec<f64>,
        label: CovidLabel,
        subject_id: &str,
        day_index: u32,
    ) -> Result<Self, ClassifyError> {
        if features.is_empty() {
            return Err(ClassifyError::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        if !features.iter().all(|v| v.is_finite()) {
            return Err(ClassifyError::NonFinite);
        }
        Ok(Self {
            features,
            label,
            subject_id: subject_id.to_string(),
            day_index,
        })
    }
}

fn check_dataset(data: &[LabeledFeature]) -> Result<usize, ClassifyError> {
    let first = data.first().ok_or(ClassifyError::EmptyTrainingSet)?;
    let d = first.features.len();
    for item in data {
        if item.features.len() != d {
            return Err(ClassifyError::DimensionMismatch {
                expected: d,
                got: item.features.len(),
            });
        }
    }
    Ok(d)
}

fn require_both_classes(data: &[LabeledFeature]) -> Result<(), ClassifyError> {
    let covid = data.iter().any(|s| s.label == CovidLabel::Covid);
    let healthy = data.iter().any(|s| s.label == CovidLabel::Healthy);
    if covid && healthy {
        Ok(())
    } else {
        Err(ClassifyError::SingleClass)
    }
}

/// Per-dimension z-scoring: the domain adaptation step between source
/// features and target classifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Fit mean and population standard deviation per dimension, from the
    /// training partition only. Deviations are floored at [`STD_FLOOR`].
    pub fn fit(train: &[LabeledFeature]) -> Result<Self, ClassifyError> {
        let d = check_dataset(train)?;
        let n = train.len() as f64;
        let mut mean = vec![0.0; d];
        for item in train {
            for (m, &v) in mean.iter_mut().zip(&item.features) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for item in train {
            for (s, (&v, &m)) in var.iter_mut().zip(item.features.iter().zip(&mean)) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.iter().map(|&s| (s / n).sqrt().max(STD_FLOOR)).collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, features: &[f64]) -> Result<Vec<f64>, ClassifyError> {
        if features.len() != self.mean.len() {
            return Err(ClassifyError::DimensionMismatch {
                expected: self.mean.len(),
                got: features.len(),
            });
        }
        Ok(features
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect())
    }

    pub fn apply_all(&self, data: &[LabeledFeature]) -> Result<Vec<LabeledFeature>, ClassifyError> {
        data.iter()
            .map(|item| {
                Ok(LabeledFeature {
                    features: self.apply(&item.features)?,
                    label: item.label,
                    subject_id: item.subject_id.clone(),
                    day_index: item.day_index,
                })
            })
            .collect()
    }
}

/// The four classifier families of the evaluation protocol, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    LogisticRegression,
    Knn,
    LinearSvm,
    RandomForest,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 4] = [
        ClassifierKind::LogisticRegression,
        ClassifierKind::Knn,
        ClassifierKind::LinearSvm,
        ClassifierKind::RandomForest,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ClassifierKind::LogisticRegression => "logistic_regression",
            ClassifierKind::Knn => "knn",
            ClassifierKind::LinearSvm => "linear_svm",
            ClassifierKind::RandomForest => "random_forest",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A trained classifier. Inputs to [`ClassifierModel::predict`] must already
/// be standardized with the same [`Standardizer`] used at training time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierModel {
    LogisticRegression {
        weights: Vec<f64>,
        bias: f64,
    },
    Knn {
        k: usize,
        points: Vec<Vec<f64>>,
        labels: Vec<CovidLabel>,
    },
    LinearSvm {
        weights: Vec<f64>,
        bias: f64,
    },
    RandomForest {
        trees: Vec<Tree>,
        n_features: usize,
    },
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl ClassifierModel {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            ClassifierModel::LogisticRegression { .. } => ClassifierKind::LogisticRegression,
            ClassifierModel::Knn { .. } => ClassifierKind::Knn,
            ClassifierModel::LinearSvm { .. } => ClassifierKind::LinearSvm,
            ClassifierModel::RandomForest { .. } => ClassifierKind::RandomForest,
        }
    }

    /// Covid score in `[0, 1]` and the induced label (`score >= 0.5` maps
    /// to covid, favoring sensitivity on exact ties).
    pub fn predict(&self, features: &[f64]) -> Result<(CovidLabel, f64), ClassifyError> {
        let score = match self {
            ClassifierModel::LogisticRegression { weights, bias }
            | ClassifierModel::LinearSvm { weights, bias } => {
                if features.len() != weights.len() {
                    return Err(ClassifyError::DimensionMismatch {
                        expected: weights.len(),
                        got: features.len(),
                    });
                }
                let margin: f64 =
                    weights.iter().zip(features).map(|(w, x)| w * x).sum::<f64>() + bias;
                sigmoid(margin)
            }
            ClassifierModel::Knn { k, points, labels } => {
                knn::vote_fraction(points, labels, *k, features)?
            }
            ClassifierModel::RandomForest { trees, n_features } => {
                if features.len() != *n_features {
                    return Err(ClassifyError::DimensionMismatch {
                        expected: *n_features,
                        got: features.len(),
                    });
                }
                let votes = trees
                    .iter()
                    .filter(|t| t.predict(features) >= 0.5)
                    .count();
                votes as f64 / trees.len() as f64
            }
        };
        let label = if score >= 0.5 {
            CovidLabel::Covid
        } else {
            CovidLabel::Healthy
        };
        Ok((label, score))
    }
}

/// Hyperparameters for all four classifiers, bundled for the harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHypers {
    pub logreg: LogRegHyper,
    pub knn_k: usize,
    pub svm: SvmHyper,
    pub forest: ForestHyper,
}

impl Default for ClassifierHypers {
    fn default() -> Self {
        Self {
            logreg: LogRegHyper::default(),
            knn_k: 5,
            svm: SvmHyper::default(),
            forest: ForestHyper::default(),
        }
    }
}

/// Metrics of one classifier on one held-out fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub classifier: ClassifierKind,
    pub fold: usize,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    #[serde(rename = "tp")]
    pub true_pos: usize,
    #[serde(rename = "fp")]
    pub false_pos: usize,
    #[serde(rename = "tn")]
    pub true_neg: usize,
    #[serde(rename = "fn")]
    pub false_neg: usize,
}

impl EvalRow {
    /// Confusion matrix, accuracy, sensitivity, and specificity from
    /// `(predicted, actual)` pairs. Undefined rates (empty denominator) are
    /// reported as 0.
    pub fn from_predictions(
        classifier: ClassifierKind,
        fold: usize,
        pairs: &[(CovidLabel, CovidLabel)],
    ) -> Self {
        let (mut tp, mut fp, mut tn, mut fne) = (0usize, 0usize, 0usize, 0usize);
        for &(predicted, actual) in pairs {
            match (predicted, actual) {
                (CovidLabel::Covid, CovidLabel::Covid) => tp += 1,
                (CovidLabel::Covid, CovidLabel::Healthy) => fp += 1,
                (CovidLabel::Healthy, CovidLabel::Healthy) => tn += 1,
                (CovidLabel::Healthy, CovidLabel::Covid) => fne += 1,
            }
        }
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        Self {
            classifier,
            fold,
            accuracy: ratio(tp + tn, pairs.len()),
            sensitivity: ratio(tp, tp + fne),
            specificity: ratio(tn, tn + fp),
            true_pos: tp,
            false_pos: fp,
            true_neg: tn,
            false_neg: fne,
        }
    }
}

/// Per-classifier mean and sample standard deviation over folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSummary {
    pub classifier: ClassifierKind,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_sensitivity: f64,
    pub std_sensitivity: f64,
    pub mean_specificity: f64,
    pub std_specificity: f64,
}

/// Full cross-validation report: `4 x k` rows plus per-classifier summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub folds: usize,
    pub rows: Vec<EvalRow>,
    pub summaries: Vec<ClassifierSummary>,
}

impl EvalReport {
    pub fn summary(&self, kind: ClassifierKind) -> Option<&ClassifierSummary> {
        self.summaries.iter().find(|s| s.classifier == kind)
    }

    /// CSV with a header and one line per (classifier, fold) row. Floats are
    /// printed with shortest round-trip precision, so equal reports yield
    /// byte-equal CSV.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("classifier,fold,accuracy,sensitivity,specificity,tp,fp,tn,fn\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.classifier,
                r.fold,
                r.accuracy,
                r.sensitivity,
                r.specificity,
                r.true_pos,
                r.false_pos,
                r.true_neg,
                r.false_neg
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

const MODEL_FORMAT: &str = "coughscreen-model";
const CLASSIFIER_KIND: &str = "covid-classifier";

/// A classifier bundled with the standardizer that produced its training
/// inputs; what `predict` needs to score raw feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedClassifier {
    pub standardizer: Standardizer,
    pub model: ClassifierModel,
}

#[derive(Serialize, Deserialize)]
struct ClassifierFile {
    format: String,
    version: u32,
    kind: String,
    classifier: SavedClassifier,
}

/// Write a classifier in the same versioned container format as network
/// checkpoints.
pub fn save_classifier(path: &Path, saved: &SavedClassifier) -> Result<(), ClassifyError> {
    let file = ClassifierFile {
        format: MODEL_FORMAT.to_string(),
        version: 1,
        kind: CLASSIFIER_KIND.to_string(),
        classifier: saved.clone(),
    };
    let json = serde_json::to_string(&file).expect("classifier serialization cannot fail");
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_classifier(path: &Path) -> Result<SavedClassifier, ClassifyError> {
    let bytes = std::fs::read(path)?;
    let file: ClassifierFile = serde_json::from_slice(&bytes)
        .map_err(|e| ClassifyError::BadModelFile(format!("unreadable JSON: {e}")))?;
    if file.format != MODEL_FORMAT {
        return Err(ClassifyError::BadModelFile(format!(
            "unknown format {:?}",
            file.format
        )));
    }
    if file.version != 1 {
        return Err(ClassifyError::BadModelFile(format!(
            "unsupported version {}",
            file.version
        )));
    }
    if file.kind != CLASSIFIER_KIND {
        return Err(ClassifyError::BadModelFile(format!(
            "expected kind {CLASSIFIER_KIND:?}, found {:?}",
            file.kind
        )));
    }
    Ok(file.classifier)
}

/// Train one classifier family on an already standardized training set.
pub fn train_by_kind(
    kind: ClassifierKind,
    train: &[LabeledFeature],
    hypers: &ClassifierHypers,
    forest_seed: u64,
) -> Result<ClassifierModel, ClassifyError> {
    match kind {
        ClassifierKind::LogisticRegression => train_logreg(train, &hypers.logreg),
        ClassifierKind::Knn => train_knn(train, hypers.knn_k),
        ClassifierKind::LinearSvm => train_svm(train, &hypers.svm),
        ClassifierKind::RandomForest => {
            let hyper = ForestHyper {
                rng_seed: forest_seed,
                ..hypers.forest.clone()
            };
            train_forest(train, &hyper)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use forest::TreeNode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn feature(values: &[f64], label: CovidLabel, subject: &str) -> LabeledFeature {
        LabeledFeature::new(values.to_vec(), label, subject, 0).unwrap()
    }

    #[test]
    fn single_vector_standardizes_to_zero() {
        let train = vec![feature(&[3.0, -1.0, 7.5], CovidLabel::Covid, "s0")];
        let s = Standardizer::fit(&train).unwrap();
        assert_eq!(s.apply(&[3.0, -1.0, 7.5]).unwrap(), vec![0.0, 0.0, 0.0]);
        assert!(s.std.iter().all(|&v| v == STD_FLOOR));
    }

    #[test]
    fn symmetric_pair_standardizes_to_plus_minus_one() {
        let train = vec![
            feature(&[0.0, 0.0], CovidLabel::Healthy, "s0"),
            feature(&[2.0, 2.0], CovidLabel::Covid, "s1"),
        ];
        let s = Standardizer::fit(&train).unwrap();
        assert_eq!(s.apply(&[0.0, 0.0]).unwrap(), vec![-1.0, -1.0]);
        assert_eq!(s.apply(&[2.0, 2.0]).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn standardized_set_has_zero_mean_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let train: Vec<LabeledFeature> = (0..50)
            .map(|i| {
                let values: Vec<f64> = (0..1024).map(|_| rng.gen_range(-10.0..10.0)).collect();
                feature(&values, CovidLabel::Covid, &format!("s{i}"))
            })
            .collect();
        let s = Standardizer::fit(&train).unwrap();
        let transformed = s.apply_all(&train).unwrap();
        for dim in 0..1024 {
            let col: Vec<f64> = transformed.iter().map(|t| t.features[dim]).collect();
            let mean = col.iter().sum::<f64>() / 50.0;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 50.0;
            assert!(mean.abs() < 1e-10, "dim {dim} mean {mean}");
            assert!((var - 1.0).abs() < 1e-10, "dim {dim} var {var}");
        }
    }

    #[test]
    fn standardizer_rejects_empty_and_mismatched() {
        assert!(matches!(
            Standardizer::fit(&[]),
            Err(ClassifyError::EmptyTrainingSet)
        ));
        let s = Standardizer::fit(&[feature(&[1.0, 2.0], CovidLabel::Covid, "s0")]).unwrap();
        assert!(matches!(
            s.apply(&[1.0]),
            Err(ClassifyError::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn null_logreg_scores_exactly_half() {
        let model = ClassifierModel::LogisticRegression {
            weights: vec![0.0; 4],
            bias: 0.0,
        };
        let (label, score) = model.predict(&[1.0, -2.0, 3.0, 0.5]).unwrap();
        assert_eq!(score, 0.5);
        assert_eq!(label, CovidLabel::Covid); // 0.5 resolves to covid
    }

    #[test]
    fn forest_vote_fraction_is_exact() {
        let leaf = |covid: bool| Tree {
            nodes: vec![TreeNode::Leaf {
                covid_fraction: if covid { 1.0 } else { 0.0 },
            }],
            root: 0,
        };
        let model = ClassifierModel::RandomForest {
            trees: vec![leaf(true), leaf(true), leaf(true), leaf(false)],
            n_features: 2,
        };
        let (label, score) = model.predict(&[0.0, 0.0]).unwrap();
        assert_eq!(score, 0.75);
        assert_eq!(label, CovidLabel::Covid);
    }

    #[test]
    fn metrics_match_their_confusion_matrix() {
        use CovidLabel::*;
        let pairs = [
            (Covid, Covid),
            (Covid, Covid),
            (Healthy, Covid),
            (Covid, Healthy),
            (Healthy, Healthy),
            (Healthy, Healthy),
        ];
        let row = EvalRow::from_predictions(ClassifierKind::Knn, 2, &pairs);
        assert_eq!(
            (row.true_pos, row.false_pos, row.true_neg, row.false_neg),
            (2, 1, 2, 1)
        );
        assert_eq!(row.accuracy, 4.0 / 6.0);
        assert_eq!(row.sensitivity, 2.0 / 3.0);
        assert_eq!(row.specificity, 2.0 / 3.0);
        assert_eq!(
            row.true_pos + row.false_pos + row.true_neg + row.false_neg,
            pairs.len()
        );
    }

    #[test]
    fn csv_has_header_and_one_line_per_row() {
        let row = EvalRow::from_predictions(
            ClassifierKind::LinearSvm,
            0,
            &[(CovidLabel::Covid, CovidLabel::Covid)],
        );
        let report = EvalReport {
            folds: 1,
            rows: vec![row.clone(), row],
            summaries: vec![],
        };
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(
            lines[0],
            "classifier,fold,accuracy,sensitivity,specificity,tp,fp,tn,fn"
        );
        assert!(lines[1].starts_with("linear_svm,0,"));
    }

    #[test]
    fn classifier_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clf.json");
        let saved = SavedClassifier {
            standardizer: Standardizer {
                mean: vec![0.5, -0.5],
                std: vec![1.0, 2.0],
            },
            model: ClassifierModel::LinearSvm {
                weights: vec![0.25, -1.5],
                bias: 0.125,
            },
        };
        save_classifier(&path, &saved).unwrap();
        assert_eq!(load_classifier(&path).unwrap(), saved);

        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, text.replace("covid-classifier", "digit-convnet")).unwrap();
        assert!(matches!(
            load_classifier(&path),
            Err(ClassifyError::BadModelFile(_))
        ));
    }
}
