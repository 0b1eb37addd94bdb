//! Weighted CART trees with Gini impurity.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go to `left`.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    /// Class distribution over the model's class list, summing to 1.
    Leaf { dist: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    /// Total weighted impurity decrease per feature.
    pub importance: Vec<f64>,
}

impl Tree {
    pub fn leaf_for(&self, row: &[f64]) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf { dist } => return dist,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }
}

pub(crate) struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub features_per_split: usize,
    pub bootstrap: bool,
}

/// Training view: row-major features, class indices and per-row weights.
pub(crate) struct TrainSet<'a> {
    pub rows: &'a [Vec<f64>],
    pub class_idx: &'a [usize],
    pub weights: &'a [f64],
    pub n_classes: usize,
}

fn gini(w: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - w.iter().map(|c| (c / total) * (c / total)).sum::<f64>()
}

/// Impurity decreases within this fraction of the node weight are ties, kept
/// by the first candidate, so rescaling all weights cannot flip a choice.
const GAIN_TIE: f64 = 1e-12;

struct Split {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

struct Builder<'a, 'r> {
    data: &'a TrainSet<'a>,
    params: &'a TreeParams,
    /// Bootstrap multiplicity per row.
    mult: Vec<u32>,
    rng: &'r mut Rng,
    nodes: Vec<Node>,
    importance: Vec<f64>,
}

impl Builder<'_, '_> {
    fn weight(&self, i: usize) -> f64 {
        self.data.weights[i] * self.mult[i] as f64
    }

    fn class_weights(&self, idx: &[usize]) -> (Vec<f64>, f64) {
        let mut w = vec![0.0; self.data.n_classes];
        for &i in idx {
            w[self.data.class_idx[i]] += self.weight(i);
        }
        let total = w.iter().sum();
        (w, total)
    }

    fn leaf(&mut self, w: &[f64], total: f64) -> usize {
        let dist = if total > 0.0 {
            w.iter().map(|c| c / total).collect()
        } else {
            vec![1.0 / self.data.n_classes as f64; self.data.n_classes]
        };
        self.nodes.push(Node::Leaf { dist });
        self.nodes.len() - 1
    }

    fn best_split_on(&self, idx: &mut [usize], feature: usize, parent: &[f64], total: f64) -> Option<Split> {
        let rows = self.data.rows;
        idx.sort_unstable_by(|&a, &b| rows[a][feature].total_cmp(&rows[b][feature]));
        let min_leaf = self.params.min_samples_leaf as u64;
        let n_total: u64 = idx.iter().map(|&i| self.mult[i] as u64).sum();
        let parent_imp = total * gini(parent, total);
        let mut left = vec![0.0; parent.len()];
        let mut right = parent.to_vec();
        let (mut wl, mut nl) = (0.0, 0u64);
        let mut best: Option<Split> = None;
        for pos in 0..idx.len() - 1 {
            let i = idx[pos];
            let w = self.weight(i);
            let c = self.data.class_idx[i];
            left[c] += w;
            right[c] -= w;
            wl += w;
            nl += self.mult[i] as u64;
            let (a, b) = (rows[i][feature], rows[idx[pos + 1]][feature]);
            if a == b || nl < min_leaf || n_total - nl < min_leaf {
                continue;
            }
            let wr = total - wl;
            let decrease = parent_imp - wl * gini(&left, wl) - wr * gini(&right, wr);
            if best.as_ref().is_none_or(|s| decrease > s.decrease + GAIN_TIE * total) {
                let mid = a + 0.5 * (b - a);
                let threshold = if mid < b { mid } else { a };
                best = Some(Split { feature, threshold, decrease });
            }
        }
        best
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let (w, total) = self.class_weights(idx);
        let n: u64 = idx.iter().map(|&i| self.mult[i] as u64).sum();
        let pure = w.iter().filter(|&&c| c > 0.0).count() <= 1;
        let depth_done = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_done || n < 2 * self.params.min_samples_leaf as u64 || idx.len() < 2 {
            return self.leaf(&w, total);
        }
        let d = self.data.rows[0].len();
        let mut order: Vec<usize> = (0..d).collect();
        order.shuffle(self.rng);
        let k = self.params.features_per_split.clamp(1, d);
        let mut best: Option<Split> = None;
        for (tried, &f) in order.iter().enumerate() {
            // keep drawing past the quota only while nothing splittable was found
            if tried >= k && best.is_some() {
                break;
            }
            if let Some(s) = self.best_split_on(idx, f, &w, total) {
                if best.as_ref().is_none_or(|b| s.decrease > b.decrease + GAIN_TIE * total) {
                    best = Some(s);
                }
            }
        }
        let Some(split) = best else { return self.leaf(&w, total) };
        self.importance[split.feature] += split.decrease.max(0.0);

        let rows = self.data.rows;
        let mid = partition(idx, |&i| rows[i][split.feature] <= split.threshold);
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { dist: Vec::new() });
        let (l, r) = idx.split_at_mut(mid);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[slot] = Node::Split { feature: split.feature, threshold: split.threshold, left, right };
        slot
    }
}

fn partition<T, F: Fn(&T) -> bool>(v: &mut [T], pred: F) -> usize {
    let mut next = 0;
    for i in 0..v.len() {
        if pred(&v[i]) {
            v.swap(next, i);
            next += 1;
        }
    }
    next
}

pub(crate) fn grow(data: &TrainSet<'_>, params: &TreeParams, rng: &mut Rng) -> Tree {
    let n = data.rows.len();
    let mut mult = vec![0u32; n];
    if params.bootstrap {
        for _ in 0..n {
            mult[rng.random_range(0..n)] += 1;
        }
    } else {
        mult.iter_mut().for_each(|m| *m = 1);
    }
    let mut idx: Vec<usize> = (0..n).filter(|&i| mult[i] > 0 && data.weights[i] > 0.0).collect();
    let d = data.rows.first().map_or(0, Vec::len);
    let mut b = Builder { data, params, mult, rng, nodes: Vec::new(), importance: vec![0.0; d] };
    if idx.is_empty() {
        b.leaf(&vec![0.0; data.n_classes], 0.0);
    } else {
        b.build(&mut idx, 0);
    }
    Tree { nodes: b.nodes, importance: b.importance }
}
