//! Geometric dimensionality of a patch.
//!
//! From the occupancy vector: `static[i] = log2(O_i) / i` and
//! `diff[i] = log2(O_i / O_{i-1})` with the implicit `O_0 = 1`. Both sequences
//! are fused into one scalar either by a RANSAC line fit over the union of
//! `(level, value)` samples or by a median/MAD inlier mean.
//!
//! From the structure tensor: eigenvalues of the point covariance give the
//! linearity, planarity and scattering probabilities `p_dim` and
//! `dim_cov = 1 p1 + 2 p2 + 3 p3`.

use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::geom::Vec3;
use crate::octree::{PplMode, PplVector};
use crate::stats;
use crate::store::PatchId;
use crate::{symmetric_eigen, Error, Result};

pub const MAX_DIM: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimProfile {
    /// Static dimension per level, index 0 is level 1.
    pub lods: Vec<f64>,
    /// Difference dimension per level.
    pub lodd: Vec<f64>,
    /// Set when built from MidOc counts, which undercount deeper levels.
    pub midoc_bias: bool,
}

impl DimProfile {
    pub fn new(lods: Vec<f64>, lodd: Vec<f64>) -> Self {
        Self { lods, lodd, midoc_bias: false }
    }

    pub fn from_ppl(ppl: &PplVector) -> Result<Self> {
        if ppl.counts.is_empty() {
            return Err(Error::EmptyProfile);
        }
        if let Some(l) = ppl.counts.iter().position(|&c| c == 0) {
            return Err(Error::EmptyLevel { level: l + 1 });
        }
        let mut lods = Vec::with_capacity(ppl.counts.len());
        let mut lodd = Vec::with_capacity(ppl.counts.len());
        let mut prev = 1.0;
        for (i, &c) in ppl.counts.iter().enumerate() {
            let c = c as f64;
            lods.push(libm::log2(c) / (i + 1) as f64);
            lodd.push(libm::log2(c / prev));
            prev = c;
        }
        Ok(Self { lods, lodd, midoc_bias: ppl.mode == PplMode::Midoc })
    }

    /// The union of both sequences as `(level, value)` samples. Each level
    /// contributes two samples.
    pub fn samples(&self) -> Vec<(f64, f64)> {
        let s = self.lods.iter().enumerate().map(|(i, &v)| ((i + 1) as f64, v));
        let d = self.lodd.iter().enumerate().map(|(i, &v)| ((i + 1) as f64, v));
        s.chain(d).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.lods.iter().chain(&self.lodd).copied().collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMethod {
    Ransac,
    Median,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimEstimate {
    /// Dimensionality clamped to `[0, 3]`.
    pub value: f64,
    /// RANSAC: |slope| (0 is best). Median: inlier fraction (1 is best).
    pub confidence: f64,
    pub method: FusionMethod,
    /// The raw estimate fell outside `[0, 3]` and was clamped.
    pub clamped: bool,
}

impl DimEstimate {
    fn clamped(raw: f64, confidence: f64, method: FusionMethod) -> Self {
        let value = raw.clamp(0.0, MAX_DIM);
        Self { value, confidence, method, clamped: value != raw }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    pub iterations: usize,
    pub inlier_tol: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self { iterations: 100, inlier_tol: 0.15, seed: 0 }
    }
}

struct Consensus {
    inliers: Vec<usize>,
    residual: f64,
}

fn consensus(samples: &[(f64, f64)], a: usize, b: usize, tol: f64) -> Option<Consensus> {
    let (x0, y0) = samples[a];
    let (x1, y1) = samples[b];
    if x0 == x1 {
        return None;
    }
    let slope = (y1 - y0) / (x1 - x0);
    let mut inliers = Vec::new();
    let mut residual = 0.0;
    for (i, &(x, y)) in samples.iter().enumerate() {
        let r = (y - (slope * (x - x0) + y0)).abs();
        if r <= tol {
            inliers.push(i);
            residual += r;
        }
    }
    Some(Consensus { inliers, residual })
}

/// Residual sums closer than this are a tie.
const RESIDUAL_TIE: f64 = 1e-12;

fn better(cand: &Consensus, best: &Option<Consensus>) -> bool {
    match best {
        None => true,
        Some(b) => {
            cand.inliers.len() > b.inliers.len()
                || (cand.inliers.len() == b.inliers.len() && cand.residual < b.residual - RESIDUAL_TIE)
        }
    }
}

/// Fits `y = a x + b` over the profile samples with RANSAC (minimal sample of
/// two, least-squares refit on the consensus set) and evaluates the line at
/// the middle of the level range.
///
/// When the number of distinct sample pairs does not exceed `iterations`,
/// every pair is tried instead of sampling, which makes small profiles exact
/// and seed-independent. Ties in consensus size go to the smaller total
/// residual, then to the earlier pair.
pub fn dim_lod_ransac(profile: &DimProfile, config: &RansacConfig) -> Result<DimEstimate> {
    let samples = profile.samples();
    if samples.len() < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: samples.len() });
    }
    let x_min = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let x_max = samples.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    if x_min == x_max {
        return Err(Error::IdenticalAbscissa);
    }
    let n = samples.len();
    let tol = config.inlier_tol;
    let mut best: Option<Consensus> = None;
    if n * (n - 1) / 2 <= config.iterations {
        for a in 0..n {
            for b in a + 1..n {
                if let Some(c) = consensus(&samples, a, b, tol) {
                    if better(&c, &best) {
                        best = Some(c);
                    }
                }
            }
        }
    } else {
        let mut rng = crate::rng::rng_for(config.seed, crate::rng::stream::RANSAC, 0);
        let mut tries = 0;
        while tries < config.iterations {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a == b {
                continue;
            }
            tries += 1;
            if let Some(c) = consensus(&samples, a.min(b), a.max(b), tol) {
                if better(&c, &best) {
                    best = Some(c);
                }
            }
        }
    }
    // every draw had equal abscissae; the range check above makes this rare
    let Some(best) = best else { return Err(Error::IdenticalAbscissa) };
    let inliers: Vec<(f64, f64)> = best.inliers.iter().map(|&i| samples[i]).collect();
    let (slope, icpt) = stats::fit_line(&inliers).ok_or(Error::IdenticalAbscissa)?;
    let x_mid = 0.5 * (x_min + x_max);
    Ok(DimEstimate::clamped(slope * x_mid + icpt, slope.abs(), FusionMethod::Ransac))
}

pub const DEFAULT_MAD_K: f64 = 2.5;

/// Mean of the profile values within `k * MAD` of their median. With a zero
/// MAD only values equal to the median are kept.
pub fn dim_lod_median(profile: &DimProfile, k: f64) -> Result<DimEstimate> {
    robust_mean(&profile.values(), k)
}

pub fn robust_mean(values: &[f64], k: f64) -> Result<DimEstimate> {
    let m = stats::median(values).ok_or(Error::EmptyProfile)?;
    let dev: Vec<f64> = values.iter().map(|v| (v - m).abs()).collect();
    let mad = stats::median(&dev).ok_or(Error::EmptyProfile)?;
    let inliers: Vec<f64> = values
        .iter()
        .zip(&dev)
        .filter(|(_, &d)| if mad == 0.0 { d == 0.0 } else { d <= k * mad })
        .map(|(&v, _)| v)
        .collect();
    // an even-length median can fall between values; fall back to all of them
    let inliers = if inliers.is_empty() { values.to_vec() } else { inliers };
    let value = stats::mean(&inliers).ok_or(Error::EmptyProfile)?;
    Ok(DimEstimate::clamped(value, inliers.len() as f64 / values.len() as f64, FusionMethod::Median))
}

/// Structure tensor dimensionality.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovDim {
    /// `[p_1D, p_2D, p_3D]`, summing to one.
    pub p_dim: [f64; 3],
    pub value: f64,
    /// Eigenvalues of the covariance, descending.
    pub eigenvalues: [f64; 3],
}

impl CovDim {
    /// Normalizes `p` and weights each component by its dimension.
    pub fn from_probabilities(p: [f64; 3]) -> Self {
        let s: f64 = p.iter().sum();
        let p_dim = p.map(|v| v / s);
        let value = p_dim[0] + 2.0 * p_dim[1] + 3.0 * p_dim[2];
        Self { p_dim, value, eigenvalues: [f64::NAN; 3] }
    }
}

/// Covariance of the points about their barycentre (divided by `n`).
pub fn structure_tensor(points: &[Vec3]) -> [[f64; 3]; 3] {
    let n = points.len() as f64;
    let mut c = [0.0; 3];
    for p in points {
        for a in 0..3 {
            c[a] += p[a];
        }
    }
    let c = c.map(|v| v / n);
    let mut m = [[0.0; 3]; 3];
    for p in points {
        let d = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
        for i in 0..3 {
            for j in i..3 {
                m[i][j] += d[i] * d[j];
            }
        }
    }
    for i in 0..3 {
        for j in i..3 {
            m[i][j] /= n;
            m[j][i] = m[i][j];
        }
    }
    m
}

/// `dim_cov` with `sigma_i = sqrt(lambda_i)`:
/// `p1 = (s1 - s2) / s1`, `p2 = (s2 - s3) / s1`, `p3 = s3 / s1`.
pub fn dim_cov(points: &[Vec3]) -> Result<CovDim> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: points.len() });
    }
    let m = structure_tensor(points);
    let rows: Vec<Vec<f64>> = m.iter().map(|r| r.to_vec()).collect();
    let eig = symmetric_eigen(&rows);
    // eigenvalues at round-off level of the largest are exact zeros; the
    // square root would otherwise blow the noise up to ~1e-8 relative
    let top = eig.values[2].max(0.0);
    let l = [top, eig.values[1], eig.values[0]].map(|v| if v <= 1e-14 * top { 0.0 } else { v });
    let s = l.map(libm::sqrt);
    let scale = points.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    if s[0] <= 1e-12 * scale {
        return Err(Error::CoincidentPoints);
    }
    let mut out = CovDim::from_probabilities([(s[0] - s[1]) / s[0], (s[1] - s[2]) / s[0], s[2] / s[0]]);
    out.eigenvalues = l;
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementEntry {
    pub patch_id: PatchId,
    pub dim_lod: f64,
    pub dim_cov: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disagreement {
    pub patch_id: PatchId,
    pub abs_diff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub threshold: f64,
    pub patches: usize,
    pub agreeing_patches: usize,
    pub patch_fraction: f64,
    pub point_fraction: f64,
    /// Over the agreeing subset. Identical arrays report 1; otherwise `None`
    /// when either side is constant or fewer than two patches agree.
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    /// Sorted by decreasing difference, ties by id.
    pub disagreeing: Vec<Disagreement>,
}

pub fn agreement_report(entries: &[AgreementEntry], threshold: f64) -> AgreementReport {
    let agree: Vec<&AgreementEntry> =
        entries.iter().filter(|e| (e.dim_lod - e.dim_cov).abs() <= threshold).collect();
    let total_points: usize = entries.iter().map(|e| e.points).sum();
    let agree_points: usize = agree.iter().map(|e| e.points).sum();
    let x: Vec<f64> = agree.iter().map(|e| e.dim_lod).collect();
    let y: Vec<f64> = agree.iter().map(|e| e.dim_cov).collect();
    let identical = !x.is_empty() && x == y;
    let corr = |f: fn(&[f64], &[f64]) -> Option<f64>| if identical { Some(1.0) } else { f(&x, &y) };
    let mut disagreeing: Vec<Disagreement> = entries
        .iter()
        .filter(|e| (e.dim_lod - e.dim_cov).abs() > threshold)
        .map(|e| Disagreement { patch_id: e.patch_id, abs_diff: (e.dim_lod - e.dim_cov).abs() })
        .collect();
    disagreeing.sort_by(|a, b| b.abs_diff.total_cmp(&a.abs_diff).then(a.patch_id.cmp(&b.patch_id)));
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    AgreementReport {
        threshold,
        patches: entries.len(),
        agreeing_patches: agree.len(),
        patch_fraction: frac(agree.len(), entries.len()),
        point_fraction: frac(agree_points, total_points),
        pearson: corr(stats::pearson),
        spearman: corr(stats::spearman),
        disagreeing,
    }
}
