//! Random forest: bagged binary CART trees on Gini impurity, √p feature
//! subsampling, grown without pruning.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::DataSet;
use crate::error::{Error, Result};

/// 1 − Σ p_k².
pub fn gini_impurity(proportions: &[f64]) -> Result<f64> {
    let sum: f64 = proportions.iter().sum();
    if proportions.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidParameter(format!(
            "proportions must be non-negative and sum to 1, got sum {sum}"
        )));
    }
    Ok(1.0 - proportions.iter().map(|p| p * p).sum::<f64>())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    /// Majority vote of the training rows that reached the leaf; vote ties
    /// go to class 1.
    Leaf { vote: u8, n1: usize, n0: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn vote(&self, x: &[f64]) -> u8 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { vote, .. } => return *vote,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    trees: Vec<Tree>,
    feature_subset_size: usize,
    seed: u64,
}

impl ForestModel {
    /// Bagged forest: each tree sees an n-row bootstrap resample and splits
    /// on the best Gini reduction among ⌈√p⌉ randomly drawn features; nodes
    /// stop at purity or fewer than 2 rows. Deterministic per seed (tree b
    /// uses stream b of the seed).
    pub fn fit(train: &DataSet, n_trees: usize, seed: u64) -> Result<Self> {
        if n_trees == 0 {
            return Err(Error::InvalidParameter("need at least 1 tree".into()));
        }
        if train.n() < 2 {
            return Err(Error::DegenerateData("need at least 2 training rows".into()));
        }
        if !train.has_both_classes() {
            return Err(Error::DegenerateData("training labels are single-class".into()));
        }
        let p = train.p();
        let feature_subset_size = (p as f64).sqrt().ceil() as usize;
        let trees = (0..n_trees)
            .map(|b| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(b as u64);
                grow_tree(train.states(), train.labels(), feature_subset_size, &mut rng)
            })
            .collect();
        Ok(Self { trees, feature_subset_size, seed })
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn feature_subset_size(&self) -> usize {
        self.feature_subset_size
    }

    /// Fraction of trees voting class 1.
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        let ones = self.trees.iter().filter(|t| t.vote(x) == 1).count();
        ones as f64 / self.trees.len() as f64
    }

    /// Majority of tree votes; ties go to class 1.
    pub fn classify(&self, x: &[f64]) -> u8 {
        u8::from(self.predict_proba(x) >= 0.5)
    }
}

fn grow_tree(
    states: &DMatrix<f64>,
    labels: &[u8],
    subset: usize,
    rng: &mut ChaCha8Rng,
) -> Tree {
    let n = states.nrows();
    let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let mut tree = Tree { nodes: Vec::new() };
    build_node(&mut tree, states, labels, sample, subset, rng);
    tree
}

fn leaf_from(labels: &[u8], rows: &[usize]) -> Node {
    let n1 = rows.iter().filter(|&&i| labels[i] == 1).count();
    let n0 = rows.len() - n1;
    Node::Leaf { vote: u8::from(n1 >= n0), n1, n0 }
}

/// Appends the subtree for `rows` and returns its root index.
fn build_node(
    tree: &mut Tree,
    states: &DMatrix<f64>,
    labels: &[u8],
    rows: Vec<usize>,
    subset: usize,
    rng: &mut ChaCha8Rng,
) -> usize {
    let n1 = rows.iter().filter(|&&i| labels[i] == 1).count();
    let m = rows.len();
    if m < 2 || n1 == 0 || n1 == m {
        tree.nodes.push(leaf_from(labels, &rows));
        return tree.nodes.len() - 1;
    }

    let p = states.ncols();
    // partial Fisher–Yates draw of `subset` distinct features
    let mut feats: Vec<usize> = (0..p).collect();
    for t in 0..subset.min(p) {
        let j = rng.random_range(t..p);
        feats.swap(t, j);
    }
    feats.truncate(subset.min(p));

    let parent_gini = {
        let q1 = n1 as f64 / m as f64;
        1.0 - q1 * q1 - (1.0 - q1) * (1.0 - q1)
    };
    let mut best: Option<(f64, usize, f64)> = None; // (reduction, feature, threshold)
    for &f in &feats {
        let mut vals: Vec<(f64, u8)> = rows.iter().map(|&i| (states[(i, f)], labels[i])).collect();
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total1 = n1 as f64;
        let mut left1 = 0.0;
        for cut in 1..m {
            left1 += f64::from(vals[cut - 1].1);
            if vals[cut].0 <= vals[cut - 1].0 {
                continue; // same value: not a real threshold
            }
            let (nl, nr) = (cut as f64, (m - cut) as f64);
            let (l1, r1) = (left1 / nl, (total1 - left1) / nr);
            let gl = 1.0 - l1 * l1 - (1.0 - l1) * (1.0 - l1);
            let gr = 1.0 - r1 * r1 - (1.0 - r1) * (1.0 - r1);
            let reduction = parent_gini - (nl * gl + nr * gr) / m as f64;
            let threshold = 0.5 * (vals[cut - 1].0 + vals[cut].0);
            if best.is_none_or(|(br, _, _)| reduction > br + 1e-15) {
                best = Some((reduction, f, threshold));
            }
        }
    }

    let Some((reduction, feature, threshold)) = best else {
        tree.nodes.push(leaf_from(labels, &rows));
        return tree.nodes.len() - 1;
    };
    if reduction <= 1e-15 {
        tree.nodes.push(leaf_from(labels, &rows));
        return tree.nodes.len() - 1;
    }

    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.into_iter().partition(|&i| states[(i, feature)] <= threshold);
    let at = tree.nodes.len();
    tree.nodes.push(Node::Split { feature, threshold, left: 0, right: 0 });
    let left = build_node(tree, states, labels, left_rows, subset, rng);
    let right = build_node(tree, states, labels, right_rows, subset, rng);
    if let Node::Split { left: l, right: r, .. } = &mut tree.nodes[at] {
        *l = left;
        *r = right;
    }
    at
}
