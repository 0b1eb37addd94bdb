//! Post-classification analytics: spectral layout of the confusion matrix,
//! precision/confidence curves, and precision and recall boosting.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::forest::Prediction;
use crate::store::{PatchId, PatchStore};
use crate::{symmetric_eigen, ClassId, Error, Result};

/// Ground truth class per patch.
pub type Truth = BTreeMap<PatchId, ClassId>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffinityGraph {
    pub classes: Vec<ClassId>,
    /// Symmetrized confusion with a zero diagonal.
    pub affinity: Vec<Vec<f64>>,
    /// One `(x, y)` per class.
    pub layout: Vec<[f64; 2]>,
    /// The graph has several connected components, laid out side by side.
    pub disconnected: bool,
    /// Repeated eigenvalues make the layout axes arbitrary.
    pub degenerate: bool,
}

const EIG_TOL: f64 = 1e-9;

/// Lays classes out on the Laplacian eigenvectors of the 2nd and 3rd
/// smallest eigenvalues of `A = (C + C^T) / 2` (diagonal zeroed).
///
/// Each eigenvector's sign makes its largest-magnitude entry positive. The
/// second axis is scaled by `sqrt(l2 / l3)`.
pub fn spectral_layout(confusion: &[Vec<f64>], classes: &[ClassId]) -> Result<AffinityGraph> {
    let n = confusion.len();
    if n < 3 || confusion.iter().any(|r| r.len() != n) || classes.len() != n {
        return Err(Error::BadMatrix { min: 3 });
    }
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                a[i][j] = (0.5 * (confusion[i][j] + confusion[j][i])).max(0.0);
            }
        }
    }
    let components = components(&a);
    let mut layout = vec![[0.0; 2]; n];
    let mut degenerate = false;
    if components.len() == 1 {
        let (xy, deg) = laplacian_layout(&a, &components[0]);
        layout = xy;
        degenerate = deg;
    } else {
        // each component inside a unit disk, components 5 apart along x
        for (c, members) in components.iter().enumerate() {
            let (xy, deg) = laplacian_layout(&a, members);
            degenerate |= deg;
            let r = xy.iter().map(|p| libm::hypot(p[0], p[1])).fold(0.0, f64::max);
            let s = if r > 0.0 { 1.0 / r } else { 1.0 };
            for (k, &m) in members.iter().enumerate() {
                layout[m] = [5.0 * c as f64 + xy[k][0] * s, xy[k][1] * s];
            }
        }
    }
    Ok(AffinityGraph {
        classes: classes.to_vec(),
        affinity: a,
        layout,
        disconnected: components.len() > 1,
        degenerate,
    })
}

fn components(a: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = a.len();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        let mut comp = vec![s];
        seen[s] = true;
        let mut k = 0;
        while k < comp.len() {
            let u = comp[k];
            for v in 0..n {
                if !seen[v] && a[u][v] > 0.0 {
                    seen[v] = true;
                    comp.push(v);
                }
            }
            k += 1;
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Layout of one connected component, in member order.
fn laplacian_layout(a: &[Vec<f64>], members: &[usize]) -> (Vec<[f64; 2]>, bool) {
    let m = members.len();
    match m {
        1 => return (vec![[0.0, 0.0]], false),
        2 => return (vec![[-0.5, 0.0], [0.5, 0.0]], false),
        _ => {}
    }
    let mut l = vec![vec![0.0; m]; m];
    for (i, &u) in members.iter().enumerate() {
        for (j, &v) in members.iter().enumerate() {
            if i != j {
                l[i][j] = -a[u][v];
                l[i][i] += a[u][v];
            }
        }
    }
    let eig = symmetric_eigen(&l);
    let scale = eig.values.last().copied().unwrap_or(1.0).abs().max(1.0);
    let close = |i: usize, j: usize| (eig.values[i] - eig.values[j]).abs() <= EIG_TOL * scale;
    let degenerate = close(1, 2) || (m > 3 && close(2, 3));
    let axis = |k: usize| {
        let mut v = eig.vector(k);
        let big = v.iter().copied().fold(0.0f64, |b, x| if x.abs() > b.abs() + 1e-12 { x } else { b });
        if big < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        v
    };
    // Unscaled eigenvectors put any 3 classes on an equilateral triangle;
    // shrinking the second axis by sqrt(l2 / l3) makes distances follow
    // the graph's commute times.
    let (x, y) = (axis(1), axis(2));
    let ys = if eig.values[2] > 0.0 { libm::sqrt(eig.values[1].max(0.0) / eig.values[2]) } else { 1.0 };
    ((0..m).map(|i| [x[i], y[i] * ys]).collect(), degenerate)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    /// `None` when no prediction with a known truth is retained.
    pub precision: Option<f64>,
    pub retained: usize,
    pub retained_fraction: f64,
}

fn class_predictions<'a>(preds: &'a [Prediction], class: ClassId) -> Vec<&'a Prediction> {
    preds.iter().filter(|p| p.class == class).collect()
}

fn precision_of<'a, I: Iterator<Item = &'a Prediction>>(kept: I, truth: &Truth) -> Option<f64> {
    let (mut hit, mut known) = (0usize, 0usize);
    for p in kept {
        if let Some(&t) = truth.get(&p.patch_id) {
            known += 1;
            hit += (t == p.class) as usize;
        }
    }
    (known > 0).then(|| hit as f64 / known as f64)
}

/// Precision and retention of `class` predictions with confidence `>= t`.
pub fn precision_at(preds: &[Prediction], truth: &Truth, class: ClassId, t: f64) -> CurvePoint {
    let all = class_predictions(preds, class);
    let kept: Vec<&Prediction> = all.iter().copied().filter(|p| p.confidence >= t).collect();
    CurvePoint {
        threshold: t,
        precision: precision_of(kept.iter().copied(), truth),
        retained: kept.len(),
        retained_fraction: if all.is_empty() { 0.0 } else { kept.len() as f64 / all.len() as f64 },
    }
}

/// One point per distinct confidence value of the class's predictions,
/// ascending. Empty when the class is never predicted.
pub fn precision_confidence_curve(preds: &[Prediction], truth: &Truth, class: ClassId) -> Vec<CurvePoint> {
    let mut conf: Vec<f64> = class_predictions(preds, class).iter().map(|p| p.confidence).collect();
    conf.sort_by(f64::total_cmp);
    conf.dedup();
    conf.into_iter().map(|t| precision_at(preds, truth, class, t)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostResult {
    pub class: ClassId,
    pub min_confidence: Option<f64>,
    pub radius_xy: Option<f64>,
    pub radius_z: Option<f64>,
    /// Metrics are `None` without ground truth.
    pub precision_before: Option<f64>,
    pub precision_after: Option<f64>,
    pub recall_before: Option<f64>,
    pub recall_after: Option<f64>,
    pub size_before: usize,
    pub size_after: usize,
    /// `size_after / size_before` for precision boosting.
    pub retained_fraction: f64,
    /// `size_after / store size` for recall boosting.
    pub filtering_ratio: Option<f64>,
    pub selected: Vec<PatchId>,
}

fn set_metrics(set: &BTreeSet<PatchId>, truth: &Truth, class: ClassId) -> (Option<f64>, Option<f64>) {
    let positives = truth.values().filter(|&&c| c == class).count();
    let known = set.iter().filter(|id| truth.contains_key(id)).count();
    let hits = set.iter().filter(|id| truth.get(id) == Some(&class)).count();
    let precision = (known > 0).then(|| hits as f64 / known as f64);
    let recall = (positives > 0).then(|| hits as f64 / positives as f64);
    (precision, recall)
}

/// Keeps `class` predictions with confidence `>= min_confidence`.
pub fn precision_boost(preds: &[Prediction], truth: Option<&Truth>, class: ClassId, min_confidence: f64) -> BoostResult {
    let before: BTreeSet<PatchId> = class_predictions(preds, class).iter().map(|p| p.patch_id).collect();
    let after: BTreeSet<PatchId> = class_predictions(preds, class)
        .iter()
        .filter(|p| p.confidence >= min_confidence)
        .map(|p| p.patch_id)
        .collect();
    let (pb, rb) = truth.map_or((None, None), |t| set_metrics(&before, t, class));
    let (pa, ra) = truth.map_or((None, None), |t| set_metrics(&after, t, class));
    BoostResult {
        class,
        min_confidence: Some(min_confidence),
        radius_xy: None,
        radius_z: None,
        precision_before: pb,
        precision_after: pa,
        recall_before: rb,
        recall_after: ra,
        size_before: before.len(),
        size_after: after.len(),
        retained_fraction: if before.is_empty() { 0.0 } else { after.len() as f64 / before.len() as f64 },
        filtering_ratio: None,
        selected: after.into_iter().collect(),
    }
}

/// Adds every patch around the `class` predictions (see [`PatchStore::neighbors`]).
pub fn recall_boost(
    store: &PatchStore,
    preds: &[Prediction],
    truth: Option<&Truth>,
    class: ClassId,
    radius_xy: f64,
    radius_z: f64,
) -> BoostResult {
    let before: BTreeSet<PatchId> = class_predictions(preds, class).iter().map(|p| p.patch_id).collect();
    let after = store.neighbors(&before, radius_xy, radius_z);
    let (pb, rb) = truth.map_or((None, None), |t| set_metrics(&before, t, class));
    let (pa, ra) = truth.map_or((None, None), |t| set_metrics(&after, t, class));
    BoostResult {
        class,
        min_confidence: None,
        radius_xy: Some(radius_xy),
        radius_z: Some(radius_z),
        precision_before: pb,
        precision_after: pa,
        recall_before: rb,
        recall_after: ra,
        size_before: before.len(),
        size_after: after.len(),
        retained_fraction: if before.is_empty() { 0.0 } else { after.len() as f64 / before.len() as f64 },
        filtering_ratio: Some(after.len() as f64 / store.len() as f64),
        selected: after.into_iter().collect(),
    }
}
