//! Random forest over patch feature vectors.
//!
//! Bootstrap per tree, a random feature subset per split (`floor(sqrt(d))` by
//! default), weighted Gini impurity and class-weighted leaf distributions.
//! Every tree draws from its own RNG stream derived from the master seed, so
//! a model does not depend on how trees are scheduled.

mod balance;
mod eval;
mod tree;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::rng::{rng_for, stream};
use crate::store::PatchId;
use crate::{ClassId, Error, Result};

pub use balance::{balance, Balanced};
pub use eval::{class_mix, kfold_eval, kfold_eval_on, per_point_metrics, stratified_folds, ClassMetrics, EvalReport, PointMetrics};
pub use tree::{Node, Tree};

/// Labelled feature rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub ids: Vec<PatchId>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<ClassId>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Sorted distinct labels.
    pub fn classes(&self) -> Vec<ClassId> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            ids: idx.iter().map(|&i| self.ids[i]).collect(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn support(&self, class: ClassId) -> usize {
        self.labels.iter().filter(|&&l| l == class).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Balancing {
    None,
    /// Randomly drop rows of every class above `cap_ratio` times the
    /// smallest class support.
    Undersample { cap_ratio: f64 },
    /// Weight rows by `total / (n_classes * support_c)`.
    ClassWeights,
    /// Undersample, then weight the remaining rows.
    UndersampleThenWeights { cap_ratio: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub n_trees: usize,
    /// `None` grows until leaves are pure.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// `None` uses `floor(sqrt(d))`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub balancing: Balancing,
    pub folds: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            features_per_split: None,
            bootstrap: true,
            balancing: Balancing::None,
            folds: 3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.n_trees < 1 {
            return bad("n_trees must be >= 1");
        }
        if self.folds < 2 {
            return bad("folds must be >= 2");
        }
        if self.min_samples_leaf < 1 {
            return bad("min_samples_leaf must be >= 1");
        }
        match self.balancing {
            Balancing::Undersample { cap_ratio } | Balancing::UndersampleThenWeights { cap_ratio }
                if !(cap_ratio >= 1.0) =>
            {
                bad("cap_ratio must be >= 1")
            }
            _ => Ok(()),
        }
    }

    fn features_per_split(&self, d: usize) -> usize {
        self.features_per_split.unwrap_or_else(|| libm::floor(libm::sqrt(d as f64)) as usize).clamp(1, d.max(1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub feature_names: Vec<String>,
    pub classes: Vec<ClassId>,
    /// Mean weight of each class's rows in the training set.
    pub class_weights: Vec<f64>,
    pub trees: Vec<Tree>,
    /// Mean impurity decrease per feature, summing to 1.
    pub importance: Vec<f64>,
    /// No tree found a single split; predictions are class priors.
    pub degenerate: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub patch_id: PatchId,
    pub class: ClassId,
    /// Averaged leaf probability of `class`, in (0, 1].
    pub confidence: f64,
}

/// Runs the independent per-tree jobs; lets callers parallelize training.
pub trait Executor {
    fn map_trees(&self, n: usize, job: &(dyn Fn(usize) -> Tree + Sync)) -> Vec<Tree>;
}

/// Trains trees one after the other.
pub struct Sequential;

impl Executor for Sequential {
    fn map_trees(&self, n: usize, job: &(dyn Fn(usize) -> Tree + Sync)) -> Vec<Tree> {
        (0..n).map(job).collect()
    }
}

/// Balances `data` as configured, then trains on the kept rows. The balancing
/// stream is distinct from every evaluation fold's.
pub fn fit_on<E: Executor + ?Sized>(exec: &E, data: &Dataset, config: &TrainConfig) -> Result<ForestModel> {
    config.validate()?;
    let mut rng = rng_for(config.seed, stream::BALANCE, FULL_FIT);
    let bal = balance(&data.labels, config.balancing, &mut rng)?;
    train_on(exec, &data.subset(&bal.rows), &bal.weights, config)
}

pub fn fit(data: &Dataset, config: &TrainConfig) -> Result<ForestModel> {
    fit_on(&Sequential, data, config)
}

/// Stream index of the full-data balancing draw; folds use `0..folds`.
const FULL_FIT: u64 = 1 << 32;

pub fn train(data: &Dataset, weights: &[f64], config: &TrainConfig) -> Result<ForestModel> {
    train_on(&Sequential, data, weights, config)
}

pub fn train_on<E: Executor + ?Sized>(exec: &E, data: &Dataset, weights: &[f64], config: &TrainConfig) -> Result<ForestModel> {
    config.validate()?;
    let classes = data.classes();
    if classes.len() < 2 {
        return Err(Error::TooFewClasses { needed: 2, got: classes.len() });
    }
    if data.len() < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: data.len() });
    }
    let d = data.feature_names.len();
    if let Some(r) = data.rows.iter().find(|r| r.len() != d) {
        return Err(Error::SchemaMismatch { expected: d, got: r.len() });
    }
    if weights.len() != data.len() {
        return Err(Error::InvalidConfig("one weight per row required".into()));
    }
    let class_idx: Vec<usize> =
        data.labels.iter().map(|l| classes.binary_search(l).unwrap_or_default()).collect();
    let set = tree::TrainSet { rows: &data.rows, class_idx: &class_idx, weights, n_classes: classes.len() };
    let params = tree::TreeParams {
        max_depth: config.max_depth,
        min_samples_leaf: config.min_samples_leaf,
        features_per_split: config.features_per_split(d),
        bootstrap: config.bootstrap,
    };
    let seed = config.seed;
    let job = |t: usize| tree::grow(&set, &params, &mut rng_for(seed, stream::TREE, t as u64));
    let trees = exec.map_trees(config.n_trees, &job);

    let mut importance = vec![0.0; d];
    let mut used = 0usize;
    for t in &trees {
        let s: f64 = t.importance.iter().sum();
        if s > 0.0 {
            used += 1;
            for (acc, v) in importance.iter_mut().zip(&t.importance) {
                *acc += v / s;
            }
        }
    }
    let degenerate = used == 0;
    let total: f64 = importance.iter().sum();
    if total > 0.0 {
        importance.iter_mut().for_each(|v| *v /= total);
    } else {
        importance.iter_mut().for_each(|v| *v = 1.0 / d.max(1) as f64);
    }

    let mut class_weights = vec![0.0; classes.len()];
    let mut counts = vec![0usize; classes.len()];
    for (&c, &w) in class_idx.iter().zip(weights) {
        class_weights[c] += w;
        counts[c] += 1;
    }
    for (w, n) in class_weights.iter_mut().zip(&counts) {
        *w /= (*n).max(1) as f64;
    }
    Ok(ForestModel {
        feature_names: data.feature_names.clone(),
        classes,
        class_weights,
        trees,
        importance,
        degenerate,
    })
}

impl ForestModel {
    /// Averaged class distribution over all trees.
    pub fn distribution(&self, row: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.classes.len()];
        for t in &self.trees {
            for (a, p) in acc.iter_mut().zip(t.leaf_for(row)) {
                *a += p;
            }
        }
        let n = self.trees.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    pub fn predict_row(&self, id: PatchId, row: &[f64]) -> Result<Prediction> {
        if row.len() != self.feature_names.len() {
            return Err(Error::SchemaMismatch { expected: self.feature_names.len(), got: row.len() });
        }
        let dist = self.distribution(row);
        let (best, conf) = dist
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bp), (i, &p)| if p > bp { (i, p) } else { (bi, bp) });
        Ok(Prediction { patch_id: id, class: self.classes[best], confidence: conf })
    }

    pub fn predict(&self, ids: &[PatchId], rows: &[Vec<f64>]) -> Result<Vec<Prediction>> {
        ids.iter().zip(rows).map(|(id, r)| self.predict_row(*id, r)).collect()
    }

    /// Feature indices sorted by decreasing importance (ties by index).
    pub fn importance_ranking(importance: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..importance.len()).collect();
        idx.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]).then(a.cmp(&b)));
        idx
    }
}
