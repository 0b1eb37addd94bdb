//! Stratified K-fold evaluation and patch-to-point metric conversion.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{balance, train_on, Dataset, Executor, ForestModel, Prediction, Sequential, TrainConfig};
use crate::rng::{derive_seed, rng_for, stream};
use crate::store::Patch;
use crate::{ClassId, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: ClassId,
    /// `TP / (TP + FP)`, 0 when the class was never predicted.
    pub precision: f64,
    /// `TP / (TP + FN)`.
    pub recall: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<ClassId>,
    pub feature_names: Vec<alloc::string::String>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub per_class: Vec<ClassMetrics>,
    /// Feature importance averaged over folds.
    pub importance: Vec<f64>,
    /// Held-out prediction of every row, in dataset order.
    pub out_of_fold: Vec<Prediction>,
}

impl EvalReport {
    pub fn metrics(&self, class: ClassId) -> Option<&ClassMetrics> {
        self.per_class.iter().find(|m| m.class == class)
    }

    pub fn accuracy(&self) -> f64 {
        let total: u64 = self.confusion.iter().flatten().sum();
        let diag: u64 = (0..self.classes.len()).map(|i| self.confusion[i][i]).sum();
        if total == 0 { 0.0 } else { diag as f64 / total as f64 }
    }
}

/// Fold number of every row; each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &[ClassId], folds: usize, seed: u64) -> Result<Vec<usize>> {
    let mut by_class: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut assign = vec![0; labels.len()];
    for (&class, members) in &mut by_class {
        if members.len() < folds {
            return Err(Error::InsufficientSupport { class, support: members.len(), folds });
        }
        members.shuffle(&mut rng_for(seed, stream::FOLDS, class as u64));
        for (k, &i) in members.iter().enumerate() {
            assign[i] = k % folds;
        }
    }
    Ok(assign)
}

pub fn kfold_eval(data: &Dataset, config: &TrainConfig) -> Result<EvalReport> {
    kfold_eval_on(&Sequential, data, config)
}

pub fn kfold_eval_on<E: Executor + ?Sized>(exec: &E, data: &Dataset, config: &TrainConfig) -> Result<EvalReport> {
    config.validate()?;
    let classes = data.classes();
    if classes.len() < 2 {
        return Err(Error::TooFewClasses { needed: 2, got: classes.len() });
    }
    let folds = stratified_folds(&data.labels, config.folds, config.seed)?;
    let k = classes.len();
    let mut confusion = vec![vec![0u64; k]; k];
    let mut importance = vec![0.0; data.feature_names.len()];
    let mut oof: Vec<Option<Prediction>> = vec![None; data.len()];

    for f in 0..config.folds {
        let train_idx: Vec<usize> = (0..data.len()).filter(|&i| folds[i] != f).collect();
        let test_idx: Vec<usize> = (0..data.len()).filter(|&i| folds[i] == f).collect();
        let train_set = data.subset(&train_idx);
        let mut rng = rng_for(config.seed, stream::BALANCE, f as u64);
        let bal = balance(&train_set.labels, config.balancing, &mut rng)?;
        let fold_cfg = TrainConfig { seed: derive_seed(config.seed, stream::TREE, 1_000 + f as u64), ..config.clone() };
        let model: ForestModel = train_on(exec, &train_set.subset(&bal.rows), &bal.weights, &fold_cfg)?;
        for (acc, v) in importance.iter_mut().zip(&model.importance) {
            *acc += v / config.folds as f64;
        }
        for &i in &test_idx {
            let p = model.predict_row(data.ids[i], &data.rows[i])?;
            let t = classes.binary_search(&data.labels[i]).unwrap_or_default();
            let q = classes.binary_search(&p.class).unwrap_or_default();
            confusion[t][q] += 1;
            oof[i] = Some(p);
        }
    }

    let per_class = (0..k)
        .map(|c| {
            let tp = confusion[c][c] as f64;
            let predicted: u64 = (0..k).map(|t| confusion[t][c]).sum();
            let support: u64 = confusion[c].iter().sum();
            ClassMetrics {
                class: classes[c],
                precision: if predicted == 0 { 0.0 } else { tp / predicted as f64 },
                recall: if support == 0 { 0.0 } else { tp / support as f64 },
                support: support as usize,
            }
        })
        .collect();
    Ok(EvalReport {
        classes,
        feature_names: data.feature_names.clone(),
        confusion,
        per_class,
        importance,
        out_of_fold: oof.into_iter().flatten().collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointMetrics {
    pub class: ClassId,
    pub precision: f64,
    pub recall: f64,
}

/// Point-level metrics as patch metrics times the class mix. Classes without
/// a mix entry keep their patch metrics.
pub fn per_point_metrics(report: &EvalReport, mix: &BTreeMap<ClassId, f64>) -> Vec<PointMetrics> {
    report
        .per_class
        .iter()
        .map(|m| {
            let f = mix.get(&m.class).copied().unwrap_or(1.0);
            PointMetrics { class: m.class, precision: m.precision * f, recall: m.recall * f }
        })
        .collect()
}

/// Average mix of the patches of each dominant class.
pub fn class_mix<'a, I: IntoIterator<Item = &'a Patch>>(patches: I) -> BTreeMap<ClassId, f64> {
    let mut acc: BTreeMap<ClassId, (f64, usize)> = BTreeMap::new();
    for p in patches {
        if let (Some(c), Some(m)) = (p.dominant_class, p.mix) {
            let e = acc.entry(c).or_default();
            e.0 += m;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(c, (s, n))| (c, s / n as f64)).collect()
}
