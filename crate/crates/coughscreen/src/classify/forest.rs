//! Random forest of Gini-impurity decision trees.

use super::{check_dataset, ClassifyError, ClassifierModel, CovidLabel, LabeledFeature};
use crate::mix_seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestHyper {
    pub n_trees: usize,
    /// Maximum split depth; `usize::MAX` means unlimited.
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features considered per split; `None` selects `floor(sqrt(d))`.
    pub n_feature_sub: Option<usize>,
    pub bootstrap: bool,
    pub rng_seed: u64,
}

impl Default for ForestHyper {
    fn default() -> Self {
        Self {
            n_trees: 40,
            max_depth: 12,
            min_leaf: 1,
            n_feature_sub: None,
            bootstrap: true,
            rng_seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        covid_fraction: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
    pub root: usize,
}

impl Tree {
    /// Covid fraction at the leaf reached by `x` (`x[feature] <= threshold`
    /// descends left).
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self.root;
        loop {
            match &self.nodes[node] {
                TreeNode::Leaf { covid_fraction } => return *covid_fraction,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

/// Binary Gini impurity of a (covid, healthy) count pair.
pub fn gini(covid: usize, healthy: usize) -> f64 {
    let n = covid + healthy;
    if n == 0 {
        return 0.0;
    }
    let p = covid as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

/// Best threshold for one feature: exhaustive scan over midpoints between
/// consecutive distinct sorted values, maximizing Gini gain. Candidates
/// leaving a child below `min_leaf` are skipped; strict comparison keeps
/// the lowest qualifying threshold on gain ties.
fn best_threshold(pairs: &mut [(f64, bool)], min_leaf: usize) -> Option<(f64, f64)> {
    let n = pairs.len();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let total_covid = pairs.iter().filter(|p| p.1).count();
    let parent = gini(total_covid, n - total_covid);

    let mut best: Option<(f64, f64)> = None;
    let mut left_covid = 0usize;
    for i in 1..n {
        if pairs[i - 1].1 {
            left_covid += 1;
        }
        if pairs[i - 1].0 >= pairs[i].0 {
            continue;
        }
        if i < min_leaf || n - i < min_leaf {
            continue;
        }
        let right_covid = total_covid - left_covid;
        let weighted = (i as f64 * gini(left_covid, i - left_covid)
            + (n - i) as f64 * gini(right_covid, n - i - right_covid))
            / n as f64;
        let gain = parent - weighted;
        let threshold = (pairs[i - 1].0 + pairs[i].0) / 2.0;
        if gain > 0.0 && best.map_or(true, |(_, g)| gain > g) {
            best = Some((threshold, gain));
        }
    }
    best
}

fn build(
    data: &[LabeledFeature],
    idx: &[usize],
    depth: usize,
    hyper: &ForestHyper,
    m_features: usize,
    d: usize,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<TreeNode>,
) -> usize {
    let n = idx.len();
    let covid = idx
        .iter()
        .filter(|&&i| data[i].label == CovidLabel::Covid)
        .count();
    let leaf = |nodes: &mut Vec<TreeNode>| {
        nodes.push(TreeNode::Leaf {
            covid_fraction: covid as f64 / n as f64,
        });
        nodes.len() - 1
    };
    if covid == 0 || covid == n || depth >= hyper.max_depth || n < 2 * hyper.min_leaf {
        return leaf(nodes);
    }

    let mut features = rand::seq::index::sample(rng, d, m_features).into_vec();
    features.sort_unstable();

    // Lowest feature index wins gain ties because features are scanned in
    // ascending order and only strictly better gains replace the incumbent.
    let mut best: Option<(usize, f64, f64)> = None;
    for &f in &features {
        let mut pairs: Vec<(f64, bool)> = idx
            .iter()
            .map(|&i| (data[i].features[f], data[i].label == CovidLabel::Covid))
            .collect();
        if let Some((threshold, gain)) = best_threshold(&mut pairs, hyper.min_leaf) {
            if best.map_or(true, |(_, _, g)| gain > g) {
                best = Some((f, threshold, gain));
            }
        }
    }
    let Some((feature, threshold, _)) = best else {
        return leaf(nodes);
    };

    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = idx
        .iter()
        .partition(|&&i| data[i].features[feature] <= threshold);
    let left = build(data, &left_idx, depth + 1, hyper, m_features, d, rng, nodes);
    let right = build(data, &right_idx, depth + 1, hyper, m_features, d, rng, nodes);
    nodes.push(TreeNode::Split {
        feature,
        threshold,
        left,
        right,
    });
    nodes.len() - 1
}

/// Bootstrap-sampled trees over random feature subsets, fully determined by
/// `rng_seed`.
pub fn train_forest(
    train: &[LabeledFeature],
    hyper: &ForestHyper,
) -> Result<ClassifierModel, ClassifyError> {
    let d = check_dataset(train)?;
    if hyper.n_trees == 0 {
        return Err(ClassifyError::InvalidHyper("need at least one tree".into()));
    }
    if hyper.min_leaf == 0 {
        return Err(ClassifyError::InvalidHyper("min_leaf must be positive".into()));
    }
    let m_features = hyper
        .n_feature_sub
        .unwrap_or_else(|| (d as f64).sqrt().floor() as usize)
        .clamp(1, d);

    let n = train.len();
    let mut trees = Vec::with_capacity(hyper.n_trees);
    for t in 0..hyper.n_trees {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(hyper.rng_seed, &[t as u64]));
        let idx: Vec<usize> = if hyper.bootstrap {
            (0..n).map(|_| rng.gen_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let mut nodes = Vec::new();
        let root = build(train, &idx, 0, hyper, m_features, d, &mut rng, &mut nodes);
        trees.push(Tree { nodes, root });
    }
    Ok(ClassifierModel::RandomForest {
        trees,
        n_features: d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn feature(values: &[f64], label: CovidLabel, subject: &str) -> LabeledFeature {
        LabeledFeature::new(values.to_vec(), label, subject, 0).unwrap()
    }

    #[test]
    fn gini_matches_hand_values() {
        assert_eq!(gini(2, 2), 0.5);
        assert_eq!(gini(4, 0), 0.0);
        assert_eq!(gini(0, 3), 0.0);
        assert!((gini(1, 3) - 0.375).abs() < 1e-15);
    }

    #[test]
    fn textbook_split_lands_between_one_and_two() {
        // {(0,h),(1,h),(2,c),(3,c)}: the only zero-impurity split separates
        // the halves; midpoint 1.5, gain = parent gini 0.5.
        let mut pairs = vec![(0.0, false), (1.0, false), (2.0, true), (3.0, true)];
        let (threshold, gain) = best_threshold(&mut pairs, 1).unwrap();
        assert!(threshold > 1.0 && threshold < 2.0);
        assert_eq!(threshold, 1.5);
        assert!((gain - 0.5).abs() < 1e-15);

        // Exhaustive oracle over every midpoint candidate.
        let values = [0.0, 1.0, 2.0, 3.0];
        let labels = [false, false, true, true];
        let mut oracle_best = (f64::NAN, f64::NEG_INFINITY);
        for i in 1..4 {
            let t = (values[i - 1] + values[i]) / 2.0;
            let lc = labels[..i].iter().filter(|&&l| l).count();
            let rc = labels[i..].iter().filter(|&&l| l).count();
            let weighted = (i as f64 * gini(lc, i - lc)
                + (4 - i) as f64 * gini(rc, 4 - i - rc))
                / 4.0;
            let g = gini(2, 2) - weighted;
            if g > oracle_best.1 {
                oracle_best = (t, g);
            }
        }
        assert_eq!(threshold, oracle_best.0);
        assert_eq!(gain, oracle_best.1);
    }

    #[test]
    fn pure_or_tiny_inputs_yield_no_split() {
        let mut pure = vec![(0.0, true), (1.0, true), (2.0, true)];
        assert!(best_threshold(&mut pure, 1).is_none());
        let mut tied = vec![(1.0, true), (1.0, false)];
        assert!(best_threshold(&mut tied, 1).is_none());
    }

    #[test]
    fn single_full_tree_memorizes_consistent_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let train: Vec<LabeledFeature> = (0..24)
            .map(|i| {
                let values: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
                // Label derived from the features: consistent by construction.
                let label = if values[0] + values[1] > 0.0 {
                    CovidLabel::Covid
                } else {
                    CovidLabel::Healthy
                };
                feature(&values, label, &format!("s{i}"))
            })
            .collect();
        let hyper = ForestHyper {
            n_trees: 1,
            max_depth: usize::MAX,
            min_leaf: 1,
            n_feature_sub: Some(5),
            bootstrap: false,
            rng_seed: 0,
        };
        let model = train_forest(&train, &hyper).unwrap();
        for item in &train {
            let (label, _) = model.predict(&item.features).unwrap();
            assert_eq!(label, item.label);
        }
    }

    #[test]
    fn identical_seeds_give_identical_forests() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let train: Vec<LabeledFeature> = (0..30)
            .map(|i| {
                let values: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let label = if rng.gen_bool(0.5) {
                    CovidLabel::Covid
                } else {
                    CovidLabel::Healthy
                };
                feature(&values, label, &format!("s{i}"))
            })
            .collect();
        let hyper = ForestHyper {
            n_trees: 8,
            rng_seed: 123,
            ..ForestHyper::default()
        };
        let a = train_forest(&train, &hyper).unwrap();
        let b = train_forest(&train, &hyper).unwrap();
        assert_eq!(a, b);
        for _ in 0..10 {
            let q: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
            assert_eq!(a.predict(&q).unwrap(), b.predict(&q).unwrap());
        }
    }

    #[test]
    fn oversized_min_leaf_collapses_to_a_root_leaf() {
        let train = vec![
            feature(&[0.0], CovidLabel::Healthy, "a"),
            feature(&[1.0], CovidLabel::Healthy, "b"),
            feature(&[2.0], CovidLabel::Covid, "c"),
            feature(&[3.0], CovidLabel::Covid, "d"),
        ];
        let hyper = ForestHyper {
            n_trees: 1,
            min_leaf: 3,
            bootstrap: false,
            n_feature_sub: Some(1),
            ..ForestHyper::default()
        };
        let ClassifierModel::RandomForest { trees, .. } = train_forest(&train, &hyper).unwrap()
        else {
            unreachable!()
        };
        assert_eq!(trees[0].nodes.len(), 1);
        assert!(matches!(trees[0].nodes[0], TreeNode::Leaf { covid_fraction } if covid_fraction == 0.5));
    }

    #[test]
    fn vote_tie_resolves_to_covid() {
        let leaf = |covid: bool| Tree {
            nodes: vec![TreeNode::Leaf {
                covid_fraction: if covid { 1.0 } else { 0.0 },
            }],
            root: 0,
        };
        let model = ClassifierModel::RandomForest {
            trees: vec![leaf(true), leaf(false)],
            n_features: 1,
        };
        let (label, score) = model.predict(&[0.0]).unwrap();
        assert_eq!(score, 0.5);
        assert_eq!(label, CovidLabel::Covid);
    }

    #[test]
    fn empty_training_set_is_rejected() {
        assert!(matches!(
            train_forest(&[], &ForestHyper::default()),
            Err(ClassifyError::EmptyTrainingSet)
        ));
    }
}
