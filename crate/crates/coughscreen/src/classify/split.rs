//! Subject-aware train/test splitting and the cross-validation harness.
//!
//! Donors contribute several recordings (often across days), so splitting at
//! the sample level would leak subject identity across partitions. All
//! splitting here operates on subject ids: a subject's samples always land on
//! one side of a split and in exactly one fold.

use super::{
    check_dataset, ClassifierHypers, ClassifierKind, ClassifierSummary, ClassifyError,
    CovidLabel, EvalReport, EvalRow, LabeledFeature, Standardizer,
};
use crate::mix_seed;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Index sets into the dataset passed to [`split_by_subject`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubjectSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

struct SubjectGroup {
    label: CovidLabel,
    samples: Vec<usize>,
}

/// Group sample indices by subject id (lexicographic order for determinism).
/// A subject observed under both labels is assigned its majority label, ties
/// to covid, so that subject exclusivity always holds.
fn group_subjects(data: &[LabeledFeature]) -> Vec<SubjectGroup> {
    let mut by_id: BTreeMap<&str, (usize, Vec<usize>)> = BTreeMap::new();
    for (i, item) in data.iter().enumerate() {
        let entry = by_id.entry(&item.subject_id).or_insert((0, Vec::new()));
        if item.label == CovidLabel::Covid {
            entry.0 += 1;
        }
        entry.1.push(i);
    }
    by_id
        .into_values()
        .map(|(covid, samples)| SubjectGroup {
            label: if 2 * covid >= samples.len() {
                CovidLabel::Covid
            } else {
                CovidLabel::Healthy
            },
            samples,
        })
        .collect()
}

fn class_members(groups: &[SubjectGroup], label: CovidLabel) -> Vec<usize> {
    (0..groups.len()).filter(|&g| groups[g].label == label).collect()
}

fn require_subjects(
    members: &[usize],
    label: CovidLabel,
    need: usize,
) -> Result<(), ClassifyError> {
    if members.len() < need {
        return Err(ClassifyError::TooFewSubjects {
            label,
            have: members.len(),
            need,
        });
    }
    Ok(())
}

/// Prefix length (in subjects) whose cumulative sample fraction is closest to
/// `fraction`, keeping at least one subject on each side. The first optimum
/// wins, so ties resolve to the smaller training prefix.
fn best_prefix(sample_counts: &[usize], fraction: f64) -> usize {
    let total: usize = sample_counts.iter().sum();
    let mut cum = 0usize;
    let mut best = (1, f64::INFINITY);
    for t in 1..sample_counts.len() {
        cum += sample_counts[t - 1];
        let err = (cum as f64 / total as f64 - fraction).abs();
        if err < best.1 {
            best = (t, err);
        }
    }
    best.0
}

/// Split by subject so the train sample fraction per class sits as close to
/// `train_fraction` as subject granularity allows. Subjects are shuffled per
/// class with a [`ChaCha8Rng`] seeded from `rng_seed`; no subject id appears
/// in both partitions.
pub fn split_by_subject(
    data: &[LabeledFeature],
    train_fraction: f64,
    rng_seed: u64,
) -> Result<SubjectSplit, ClassifyError> {
    check_dataset(data)?;
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(ClassifyError::InvalidHyper(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let groups = group_subjects(data);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in [CovidLabel::Covid, CovidLabel::Healthy] {
        let mut members = class_members(&groups, label);
        require_subjects(&members, label, 2)?;
        members.shuffle(&mut rng);
        let counts: Vec<usize> = members.iter().map(|&g| groups[g].samples.len()).collect();
        let prefix = best_prefix(&counts, train_fraction);
        for (pos, &g) in members.iter().enumerate() {
            let side = if pos < prefix { &mut train } else { &mut test };
            side.extend_from_slice(&groups[g].samples);
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SubjectSplit { train, test })
}

/// Partition subjects into `k` folds, stratified by class: each class's
/// subjects are shuffled with `rng_seed` and dealt round-robin. Returns the
/// test index set of each fold; the sets are disjoint and cover the dataset.
pub fn stratified_subject_folds(
    data: &[LabeledFeature],
    k: usize,
    rng_seed: u64,
) -> Result<Vec<Vec<usize>>, ClassifyError> {
    check_dataset(data)?;
    if k < 2 {
        return Err(ClassifyError::InvalidHyper(format!(
            "need at least 2 folds, got {k}"
        )));
    }
    let groups = group_subjects(data);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut folds = vec![Vec::new(); k];
    for label in [CovidLabel::Covid, CovidLabel::Healthy] {
        let mut members = class_members(&groups, label);
        require_subjects(&members, label, k)?;
        members.shuffle(&mut rng);
        for (pos, &g) in members.iter().enumerate() {
            folds[pos % k].extend_from_slice(&groups[g].samples);
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// Train one classifier on the split's training side and score the held-out
/// side. Returns the fold metrics together with the standardizer, which is
/// fit on the training indices only.
pub fn eval_fold(
    data: &[LabeledFeature],
    split: &SubjectSplit,
    kind: ClassifierKind,
    fold: usize,
    hypers: &ClassifierHypers,
    forest_seed: u64,
) -> Result<(EvalRow, Standardizer), ClassifyError> {
    let train_raw: Vec<LabeledFeature> =
        split.train.iter().map(|&i| data[i].clone()).collect();
    let standardizer = Standardizer::fit(&train_raw)?;
    let train = standardizer.apply_all(&train_raw)?;
    let model = super::train_by_kind(kind, &train, hypers, forest_seed)?;
    let mut pairs = Vec::with_capacity(split.test.len());
    for &i in &split.test {
        let x = standardizer.apply(&data[i].features)?;
        let (predicted, _) = model.predict(&x)?;
        pairs.push((predicted, data[i].label));
    }
    Ok((EvalRow::from_predictions(kind, fold, &pairs), standardizer))
}

fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Subject-stratified k-fold cross-validation of all four classifiers.
/// Produces `4 * k` rows in classifier-major order plus per-classifier
/// summaries; identical inputs and seed yield an identical report.
pub fn cross_validate(
    data: &[LabeledFeature],
    k: usize,
    hypers: &ClassifierHypers,
    rng_seed: u64,
) -> Result<EvalReport, ClassifyError> {
    let folds = stratified_subject_folds(data, k, rng_seed)?;
    let splits: Vec<SubjectSplit> = (0..k)
        .map(|f| {
            let test = folds[f].clone();
            let train = (0..data.len()).filter(|i| !test.contains(i)).collect();
            SubjectSplit { train, test }
        })
        .collect();

    let mut rows = Vec::with_capacity(4 * k);
    for kind in ClassifierKind::ALL {
        for (f, split) in splits.iter().enumerate() {
            let forest_seed = mix_seed(rng_seed, &[f as u64]);
            let (row, _) = eval_fold(data, split, kind, f, hypers, forest_seed)?;
            rows.push(row);
        }
    }

    let summaries = ClassifierKind::ALL
        .iter()
        .map(|&kind| {
            let pick = |get: fn(&EvalRow) -> f64| -> Vec<f64> {
                rows.iter().filter(|r| r.classifier == kind).map(get).collect()
            };
            let (mean_accuracy, std_accuracy) = mean_and_sample_std(&pick(|r| r.accuracy));
            let (mean_sensitivity, std_sensitivity) =
                mean_and_sample_std(&pick(|r| r.sensitivity));
            let (mean_specificity, std_specificity) =
                mean_and_sample_std(&pick(|r| r.specificity));
            ClassifierSummary {
                classifier: kind,
                mean_accuracy,
                std_accuracy,
                mean_sensitivity,
                std_sensitivity,
                mean_specificity,
                std_specificity,
            }
        })
        .collect();

    Ok(EvalReport {
        folds: k,
        rows,
        summaries,
    })
}
