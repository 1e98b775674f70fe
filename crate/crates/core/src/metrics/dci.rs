use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::probe::Samples;
use crate::error::{Error, Result};

/// Depth limit of the per-factor decision trees.
pub const TREE_DEPTH: usize = 10;

/// Disentanglement, completeness and informativeness with the importance
/// matrix `importance[code][factor]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DciReport {
    pub disentanglement: Option<f64>,
    pub completeness: Option<f64>,
    pub informativeness: f64,
    pub importance: Vec<Vec<f64>>,
}

/// Gini classification tree (CART). At every node the features are visited
/// in a seeded random order and a split replaces the current best only when
/// its impurity decrease is strictly larger.
#[derive(Clone, Debug)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    importance: Vec<f64>,
}

#[derive(Clone, Debug)]
enum Node {
    Leaf { class: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

fn majority(counts: &[usize]) -> usize {
    (0..counts.len()).fold(0, |b, c| if counts[c] > counts[b] { c } else { b })
}

impl DecisionTree {
    pub fn fit(x: &Samples, y: &[usize], classes: usize, max_depth: usize, seed: u64) -> Result<Self> {
        if y.len() != x.len() || x.is_empty() {
            return Err(Error::Shape(format!("{} labels for {} samples", y.len(), x.len())));
        }
        let mut tree = DecisionTree { nodes: Vec::new(), importance: vec![0.0; x.dim] };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let idx: Vec<usize> = (0..x.len()).collect();
        tree.grow(x, y, classes, idx, 0, max_depth, &mut rng);
        let total: f64 = tree.importance.iter().sum();
        if total > 0.0 {
            tree.importance.iter_mut().for_each(|v| *v /= total);
        }
        Ok(tree)
    }

    #[allow(clippy::too_many_arguments)]
    fn grow(
        &mut self,
        x: &Samples,
        y: &[usize],
        classes: usize,
        idx: Vec<usize>,
        depth: usize,
        max_depth: usize,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let mut counts = vec![0usize; classes];
        for &i in &idx {
            counts[y[i]] += 1;
        }
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { class: majority(&counts) });
        let parent = gini(&counts, idx.len());
        if depth >= max_depth || idx.len() < 2 || parent == 0.0 {
            return id;
        }

        let mut features: Vec<usize> = (0..x.dim).collect();
        features.shuffle(rng);
        let n = idx.len();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut sorted = idx.clone();
        for &f in &features {
            sorted.sort_by(|&a, &b| x.row(a)[f].total_cmp(&x.row(b)[f]));
            let mut left = vec![0usize; classes];
            let mut right = counts.clone();
            for k in 0..n - 1 {
                let c = y[sorted[k]];
                left[c] += 1;
                right[c] -= 1;
                let (lo, hi) = (x.row(sorted[k])[f], x.row(sorted[k + 1])[f]);
                if lo == hi {
                    continue;
                }
                let (nl, nr) = (k + 1, n - k - 1);
                let child = (nl as f64 * gini(&left, nl) + nr as f64 * gini(&right, nr)) / n as f64;
                let gain = parent - child;
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, lo + (hi - lo) / 2.0));
                }
            }
        }
        let Some((gain, feature, threshold)) = best else {
            return id;
        };
        self.importance[feature] += gain * n as f64;
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| x.row(i)[feature] <= threshold);
        let left = self.grow(x, y, classes, l, depth + 1, max_depth, rng);
        let right = self.grow(x, y, classes, r, depth + 1, max_depth, rng);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }

    pub fn predict(&self, row: &[f64]) -> usize {
        let mut node = 0;
        loop {
            match self.nodes[node] {
                Node::Leaf { class } => return class,
                Node::Split { feature, threshold, left, right } => {
                    node = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    /// Impurity-decrease importances, normalized to sum to 1 (all zero for a stump).
    pub fn importance(&self) -> &[f64] {
        &self.importance
    }
}

/// `1 − H_base(p)` of a non-negative weight vector, with `H` in `log_base`.
fn one_minus_entropy(weights: &[f64], base: usize) -> f64 {
    let total: f64 = weights.iter().sum();
    if base <= 1 || total <= 0.0 {
        return 1.0;
    }
    let h: f64 = weights
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| {
            let p = w / total;
            -p * p.ln()
        })
        .sum();
    1.0 - h / (base as f64).ln()
}

/// Disentanglement and completeness from an importance matrix
/// `importance[code][factor]`; `None` when the matrix is all zero.
///
/// With a single factor every code is trivially dedicated, so D = 1.
pub fn dci_from_importance(importance: &[Vec<f64>]) -> (Option<f64>, Option<f64>) {
    let codes = importance.len();
    let factors = importance.first().map_or(0, Vec::len);
    let total: f64 = importance.iter().flatten().sum();
    if codes == 0 || factors == 0 || total <= 0.0 {
        return (None, None);
    }
    let d = importance
        .iter()
        .map(|row| row.iter().sum::<f64>() / total * one_minus_entropy(row, factors))
        .sum();
    let c = (0..factors)
        .map(|j| one_minus_entropy(&importance.iter().map(|row| row[j]).collect::<Vec<_>>(), codes))
        .sum::<f64>()
        / factors as f64;
    (Some(d), Some(c))
}

/// Fits one tree per factor on `train`, collects importances into
/// `R[code][factor]` and reports held-out accuracy as informativeness.
pub fn dci(codes: &Samples, factors: &[Vec<usize>], classes: &[usize], train: &[usize], test: &[usize], seed: u64) -> Result<DciReport> {
    if factors.len() != classes.len() {
        return Err(Error::Shape(format!("{} factor columns for {} class counts", factors.len(), classes.len())));
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidArgument("DCI needs non-empty train and test splits".into()));
    }
    let xtr = Samples { dim: codes.dim, data: train.iter().flat_map(|&i| codes.row(i).iter().copied()).collect() };
    let mut importance = vec![vec![0.0; factors.len()]; codes.dim];
    let mut accuracy = Vec::with_capacity(factors.len());
    for (j, (column, &k)) in factors.iter().zip(classes).enumerate() {
        if column.len() != codes.len() {
            return Err(Error::Shape(format!("factor {j} has {} labels for {} samples", column.len(), codes.len())));
        }
        let ytr: Vec<usize> = train.iter().map(|&i| column[i]).collect();
        let tree = DecisionTree::fit(&xtr, &ytr, k, TREE_DEPTH, seed.wrapping_add(j as u64))?;
        for (row, &imp) in importance.iter_mut().zip(tree.importance()) {
            row[j] = imp;
        }
        let hits = test.iter().filter(|&&i| tree.predict(codes.row(i)) == column[i]).count();
        accuracy.push(hits as f64 / test.len() as f64);
    }
    let (disentanglement, completeness) = dci_from_importance(&importance);
    Ok(DciReport {
        disentanglement,
        completeness,
        informativeness: accuracy.iter().sum::<f64>() / accuracy.len().max(1) as f64,
        importance,
    })
}
