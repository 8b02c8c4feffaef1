//! CART classification trees with a global split budget.
//!
//! Growth is best-first: every open leaf keeps its best candidate split, and
//! each step applies the candidate with the largest decrease in weighted
//! impurity anywhere in the tree. Growth stops when the budget of internal
//! nodes is spent or no leaf has a split that lowers impurity. Ties go to
//! the earliest-created leaf, then the lowest feature index, then the lowest
//! threshold.

use serde::{Deserialize, Serialize};

use super::{argmax, Samples, Scores};
use crate::pipeline::SeverityClass;
use crate::{Error, Result};

/// Relative slack under which two impurity decreases count as equal.
const GAIN_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SplitCriterion {
    /// Gini's diversity index, 1 - Σ p².
    #[default]
    Gini,
    /// Cross-entropy, -Σ p ln p.
    Entropy,
}

impl SplitCriterion {
    /// Impurity of a node with the given class weights. Zero for an empty node.
    pub fn impurity(self, weights: &[f64; 3]) -> f64 {
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return 0.0;
        }
        match self {
            SplitCriterion::Gini => 1.0 - weights.iter().map(|w| (w / total).powi(2)).sum::<f64>(),
            SplitCriterion::Entropy => -weights
                .iter()
                .filter(|&&w| w > 0.0)
                .map(|w| {
                    let p = w / total;
                    p * p.ln()
                })
                .sum::<f64>(),
        }
    }

    /// `total * impurity`, the quantity summed over leaves.
    fn weighted(self, weights: &[f64; 3]) -> f64 {
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return 0.0;
        }
        match self {
            SplitCriterion::Gini => total - weights.iter().map(|w| w * w).sum::<f64>() / total,
            SplitCriterion::Entropy => total * self.impurity(weights),
        }
    }
}

/// Gini index of a triple of class counts.
pub fn gini_impurity(class_counts: [u64; 3]) -> Result<f64> {
    if class_counts.iter().all(|&c| c == 0) {
        return Err(Error::Domain("gini impurity of an empty node".into()));
    }
    Ok(SplitCriterion::Gini.impurity(&class_counts.map(|c| c as f64)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeParams {
    pub max_splits: usize,
    #[serde(default)]
    pub criterion: SplitCriterion,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_splits: 100,
            criterion: SplitCriterion::Gini,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        distribution: Scores,
    },
    /// Rows with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub root: TreeNode,
    pub n_splits: usize,
}

impl DecisionTree {
    pub fn leaf(&self, x: &[f64]) -> &Scores {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { distribution } => return distribution,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] < *threshold { left } else { right },
            }
        }
    }

    pub fn predict_distribution(&self, x: &[f64]) -> Scores {
        *self.leaf(x)
    }

    pub fn predict(&self, x: &[f64]) -> SeverityClass {
        argmax(self.leaf(x))
    }

    pub fn n_leaves(&self) -> usize {
        fn count(n: &TreeNode) -> usize {
            match n {
                TreeNode::Leaf { .. } => 1,
                TreeNode::Split { left, right, .. } => count(left) + count(right),
            }
        }
        count(&self.root)
    }

    pub fn depth(&self) -> usize {
        fn depth(n: &TreeNode) -> usize {
            match n {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + depth(left).max(depth(right)),
            }
        }
        depth(&self.root)
    }
}

/// Weighted impurity of the partition the tree induces on `data`, per unit weight.
pub fn training_impurity(tree: &DecisionTree, data: &Samples, criterion: SplitCriterion) -> f64 {
    // group rows by leaf identity
    let mut leaves: Vec<(*const Scores, [f64; 3])> = Vec::new();
    for i in 0..data.len() {
        let id = tree.leaf(data.row(i)) as *const Scores;
        let slot = match leaves.iter().position(|(p, _)| *p == id) {
            Some(s) => s,
            None => {
                leaves.push((id, [0.0; 3]));
                leaves.len() - 1
            }
        };
        leaves[slot].1[data.label(i).index()] += 1.0;
    }
    let total: f64 = leaves.iter().map(|(_, w)| w.iter().sum::<f64>()).sum();
    leaves.iter().map(|(_, w)| criterion.weighted(w)).sum::<f64>() / total
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

struct OpenLeaf {
    rows: Vec<usize>,
    class_w: [f64; 3],
    best: Option<Candidate>,
    /// Position of this leaf in the arena.
    slot: usize,
}

enum ArenaNode {
    Leaf(Scores),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

fn class_weights(data: &Samples, rows: &[usize], weights: &[f64]) -> [f64; 3] {
    let mut w = [0.0; 3];
    for &r in rows {
        w[data.label(r).index()] += weights[r];
    }
    w
}

fn distribution(class_w: &[f64; 3]) -> Scores {
    let total: f64 = class_w.iter().sum();
    if total <= 0.0 {
        return [1.0 / 3.0; 3];
    }
    class_w.map(|w| w / total)
}

/// Midpoint that is strictly above `lo` and not above `hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m > lo {
        m
    } else {
        hi
    }
}

fn best_split(
    data: &Samples,
    rows: &[usize],
    weights: &[f64],
    class_w: &[f64; 3],
    criterion: SplitCriterion,
) -> Option<Candidate> {
    let parent = criterion.weighted(class_w);
    let node_w: f64 = class_w.iter().sum();
    if parent <= 0.0 || rows.len() < 2 {
        return None;
    }
    let eps = GAIN_EPS * node_w.max(1.0);
    let mut best: Option<Candidate> = None;
    let mut order: Vec<usize> = rows.to_vec();
    for feature in 0..data.n_features() {
        order.sort_by(|&a, &b| data.row(a)[feature].total_cmp(&data.row(b)[feature]));
        let mut left = [0.0; 3];
        for k in 0..order.len() - 1 {
            let r = order[k];
            left[data.label(r).index()] += weights[r];
            let (lo, hi) = (data.row(r)[feature], data.row(order[k + 1])[feature]);
            if lo == hi {
                continue;
            }
            let right = [class_w[0] - left[0], class_w[1] - left[1], class_w[2] - left[2]];
            let gain = parent - criterion.weighted(&left) - criterion.weighted(&right);
            if gain > eps && best.is_none_or(|b| gain > b.gain + eps) {
                best = Some(Candidate {
                    gain,
                    feature,
                    threshold: midpoint(lo, hi),
                });
            }
        }
    }
    best
}

/// Grows a tree on `rows` of `data` (repeats allowed, as in a bootstrap
/// sample), each row weighted by `weights[row]`.
pub fn grow(
    data: &Samples,
    rows: Vec<usize>,
    weights: &[f64],
    max_splits: usize,
    criterion: SplitCriterion,
) -> DecisionTree {
    let class_w = class_weights(data, &rows, weights);
    let mut arena = vec![ArenaNode::Leaf(distribution(&class_w))];
    let mut open = vec![OpenLeaf {
        best: best_split(data, &rows, weights, &class_w, criterion),
        rows,
        class_w,
        slot: 0,
    }];
    let mut n_splits = 0;
    while n_splits < max_splits {
        // earliest leaf wins ties: open is kept in creation order
        let mut pick: Option<(usize, f64)> = None;
        for (i, leaf) in open.iter().enumerate() {
            if let Some(c) = leaf.best {
                let eps = GAIN_EPS * leaf.class_w.iter().sum::<f64>().max(1.0);
                if pick.is_none_or(|(_, g)| c.gain > g + eps) {
                    pick = Some((i, c.gain));
                }
            }
        }
        let Some((i, _)) = pick else { break };
        let leaf = open.remove(i);
        let c = leaf.best.expect("picked leaf has a candidate");
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            leaf.rows.iter().partition(|&&r| data.row(r)[c.feature] < c.threshold);

        let mut children = [0usize; 2];
        let mut new_leaves = Vec::with_capacity(2);
        for (k, rows) in [left_rows, right_rows].into_iter().enumerate() {
            let class_w = class_weights(data, &rows, weights);
            arena.push(ArenaNode::Leaf(distribution(&class_w)));
            children[k] = arena.len() - 1;
            new_leaves.push(OpenLeaf {
                best: best_split(data, &rows, weights, &class_w, criterion),
                rows,
                class_w,
                slot: arena.len() - 1,
            });
        }
        arena[leaf.slot] = ArenaNode::Split {
            feature: c.feature,
            threshold: c.threshold,
            left: children[0],
            right: children[1],
        };
        open.extend(new_leaves);
        n_splits += 1;
    }

    fn build(arena: &[ArenaNode], i: usize) -> TreeNode {
        match &arena[i] {
            ArenaNode::Leaf(d) => TreeNode::Leaf { distribution: *d },
            ArenaNode::Split {
                feature,
                threshold,
                left,
                right,
            } => TreeNode::Split {
                feature: *feature,
                threshold: *threshold,
                left: Box::new(build(arena, *left)),
                right: Box::new(build(arena, *right)),
            },
        }
    }
    DecisionTree {
        root: build(&arena, 0),
        n_splits,
    }
}

/// Unweighted tree on all rows of `train`.
pub fn train_tree(train: &Samples, max_splits: usize, criterion: SplitCriterion) -> DecisionTree {
    grow(
        train,
        (0..train.len()).collect(),
        &vec![1.0; train.len()],
        max_splits,
        criterion,
    )
}

#[cfg(test)]
mod tests {
    use super::super::testutil::{blobs, uniform};
    use super::*;
    use SeverityClass::*;

    #[test]
    fn gini_values() {
        assert_eq!(gini_impurity([10, 0, 0]).unwrap(), 0.0);
        assert!((gini_impurity([5, 5, 5]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((gini_impurity([2, 1, 1]).unwrap() - 0.625).abs() < 1e-15);
        assert!(gini_impurity([0, 0, 0]).is_err());
    }

    #[test]
    fn single_class_gives_single_leaf() {
        let data = Samples::new(vec![vec![1.0], vec![2.0], vec![3.0]], vec![Moderate; 3]).unwrap();
        let t = train_tree(&data, 10, SplitCriterion::Gini);
        assert_eq!(
            t.root,
            TreeNode::Leaf {
                distribution: [0.0, 1.0, 0.0]
            }
        );
        assert_eq!(t.predict(&[100.0]), Moderate);
    }

    #[test]
    fn separable_pair_splits_between() {
        let data = Samples::new(vec![vec![1.0], vec![2.0]], vec![Weak, Moderate]).unwrap();
        let t = train_tree(&data, 1, SplitCriterion::Gini);
        match &t.root {
            TreeNode::Split {
                threshold, left, right, ..
            } => {
                assert!(*threshold > 1.0 && *threshold < 2.0);
                assert_eq!(
                    **left,
                    TreeNode::Leaf {
                        distribution: [1.0, 0.0, 0.0]
                    }
                );
                assert_eq!(
                    **right,
                    TreeNode::Leaf {
                        distribution: [0.0, 1.0, 0.0]
                    }
                );
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_budget_is_root_leaf() {
        let data = blobs(10, 2, 3.0, 1);
        let t = train_tree(&data, 0, SplitCriterion::Gini);
        assert_eq!(t.n_leaves(), 1);
        let expected = [1.0 / 3.0; 3];
        for x in [[0.0, 0.0], [9.0, -9.0]] {
            let d = t.predict_distribution(&x);
            assert!(d.iter().zip(expected).all(|(a, b)| (a - b).abs() < 1e-15));
        }
    }

    #[test]
    fn budget_is_respected() {
        let data = uniform(200, 3, 5);
        for budget in [1, 5, 20, 100] {
            let t = train_tree(&data, budget, SplitCriterion::Gini);
            assert!(t.n_splits <= budget);
            assert_eq!(t.n_leaves(), t.n_splits + 1);
        }
    }

    #[test]
    fn no_useful_split_on_xor_stops() {
        // every single axis split leaves impurity unchanged
        let data = Samples::new(
            vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![Weak, Weak, Moderate, Moderate],
        )
        .unwrap();
        assert_eq!(train_tree(&data, 5, SplitCriterion::Gini).n_splits, 0);
    }

    #[test]
    fn leaves_sum_to_one_and_impurity_falls_with_budget() {
        let data = uniform(150, 2, 8);
        let mut last = f64::INFINITY;
        for budget in 0..40 {
            let t = train_tree(&data, budget, SplitCriterion::Gini);
            fn check(n: &TreeNode) {
                match n {
                    TreeNode::Leaf { distribution } => {
                        assert!((distribution.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                        assert!(distribution.iter().all(|p| *p >= 0.0));
                    }
                    TreeNode::Split { left, right, .. } => {
                        check(left);
                        check(right);
                    }
                }
            }
            check(&t.root);
            let imp = training_impurity(&t, &data, SplitCriterion::Gini);
            assert!(imp <= last + 1e-15, "budget {budget}: {imp} > {last}");
            last = imp;
        }
    }

    #[test]
    fn weights_shift_the_leaf_distribution() {
        let data = Samples::new(vec![vec![0.0], vec![0.0]], vec![Weak, Severe]).unwrap();
        let t = grow(&data, vec![0, 1], &[0.25, 0.75], 3, SplitCriterion::Gini);
        assert_eq!(t.predict_distribution(&[0.0]), [0.25, 0.0, 0.75]);
    }

    #[test]
    fn entropy_criterion_separates_blobs() {
        let data = blobs(30, 3, 6.0, 2);
        let t = train_tree(&data, 10, SplitCriterion::Entropy);
        let correct = (0..data.len())
            .filter(|&i| t.predict(data.row(i)) == data.label(i))
            .count();
        assert!(correct as f64 / data.len() as f64 > 0.9);
    }
}
