//! Greedy CART classification tree with Gini impurity.

use serde::{Deserialize, Serialize};

use super::{argmax, gini};
use crate::dataset::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { class: usize, samples: usize },
}

/// Nodes in creation order; index 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeFit {
    pub nodes: Vec<Node>,
}

fn class_counts(labels: impl Iterator<Item = usize>, n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; n_classes];
    for l in labels {
        counts[l] += 1;
    }
    counts
}

/// Impurity decrease of moving `left` out of `parent`, with the children
/// weighted by their share of rows.
pub fn impurity_decrease(parent: &[usize], left: &[usize]) -> f64 {
    let right: Vec<usize> = parent.iter().zip(left).map(|(p, l)| p - l).collect();
    let nl: usize = left.iter().sum();
    let nr: usize = right.iter().sum();
    let n = (nl + nr) as f64;
    let g = |c: &[usize]| gini(c).unwrap_or(0.0);
    g(parent) - (nl as f64 * g(left) + nr as f64 * g(&right)) / n
}

/// Best threshold for one column of values.
///
/// Candidate thresholds are midpoints between consecutive distinct sorted
/// values; both sides must keep at least `min_leaf` rows. The largest
/// decrease wins, the smaller threshold on ties. Returns
/// `(threshold, decrease)`.
pub fn best_split_values(values: &[f64], labels: &[usize], n_classes: usize, min_leaf: usize) -> Option<(f64, f64)> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let parent = class_counts(labels.iter().copied(), n_classes);
    let mut left = vec![0usize; n_classes];
    let mut best: Option<(f64, f64)> = None;
    for pos in 0..n - 1 {
        left[labels[order[pos]]] += 1;
        let (a, b) = (values[order[pos]], values[order[pos + 1]]);
        if a == b {
            continue;
        }
        let n_left = pos + 1;
        if n_left < min_leaf || n - n_left < min_leaf {
            continue;
        }
        let decrease = impurity_decrease(&parent, &left);
        if best.is_none_or(|(_, d)| decrease > d) {
            let mut threshold = 0.5 * (a + b);
            if threshold >= b {
                threshold = a;
            }
            best = Some((threshold, decrease));
        }
    }
    best
}

/// [`best_split_values`] on column `feature` of `rows`.
pub fn best_split(rows: &[Vec<f64>], labels: &[usize], feature: usize, min_leaf: usize) -> Option<(f64, f64)> {
    let values: Vec<f64> = rows.iter().map(|r| r[feature]).collect();
    let n_classes = labels.iter().max().map_or(1, |m| m + 1);
    best_split_values(&values, labels, n_classes, min_leaf)
}

struct Builder<'a> {
    ds: &'a Dataset,
    max_depth: usize,
    min_leaf: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn leaf(&mut self, counts: &[usize], samples: usize) -> usize {
        let scores: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        self.nodes.push(Node::Leaf { class: argmax(&scores), samples });
        self.nodes.len() - 1
    }

    fn grow(&mut self, rows: &[usize], depth: usize) -> usize {
        let k = self.ds.n_classes();
        let labels: Vec<usize> = rows.iter().map(|&i| self.ds.labels()[i]).collect();
        let counts = class_counts(labels.iter().copied(), k);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if depth >= self.max_depth || pure || rows.len() < 2 * self.min_leaf {
            return self.leaf(&counts, rows.len());
        }

        let mut best: Option<(usize, f64, f64)> = None;
        for f in 0..self.ds.n_features() {
            let values: Vec<f64> = rows.iter().map(|&i| self.ds.rows()[i][f]).collect();
            if let Some((t, dec)) = best_split_values(&values, &labels, k, self.min_leaf) {
                if dec > 0.0 && best.is_none_or(|(_, _, d)| dec > d) {
                    best = Some((f, t, dec));
                }
            }
        }
        let Some((feature, threshold, _)) = best else {
            return self.leaf(&counts, rows.len());
        };

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| self.ds.rows()[i][feature] <= threshold);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { class: 0, samples: 0 });
        let left = self.grow(&left_rows, depth + 1);
        let right = self.grow(&right_rows, depth + 1);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }
}

pub fn fit(ds: &Dataset, max_depth: usize, min_leaf: usize) -> TreeFit {
    let mut b = Builder { ds, max_depth, min_leaf, nodes: Vec::new() };
    let all: Vec<usize> = (0..ds.n_rows()).collect();
    b.grow(&all, 0);
    TreeFit { nodes: b.nodes }
}

impl TreeFit {
    pub fn predict(&self, x: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { class, .. } => return *class,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Longest root-to-leaf path in edges.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { class, samples } => Some((*class, *samples)),
            _ => None,
        })
    }

    /// Structural check: children point forward, every node is reachable
    /// exactly once, features and classes are in range.
    pub fn check(&self, n_features: usize, n_classes: usize) -> bool {
        if self.nodes.is_empty() {
            return false;
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(at) = stack.pop() {
            if seen[at] {
                return false;
            }
            seen[at] = true;
            match &self.nodes[at] {
                Node::Leaf { class, .. } if *class >= n_classes => return false,
                Node::Leaf { .. } => {}
                Node::Split { feature, threshold, left, right } => {
                    let n = self.nodes.len();
                    if *feature >= n_features || !threshold.is_finite() || *left <= at || *right <= at || *left >= n || *right >= n {
                        return false;
                    }
                    stack.push(*right);
                    stack.push(*left);
                }
            }
        }
        seen.iter().all(|&s| s)
    }
}
