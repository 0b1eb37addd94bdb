//! Per-patch computations mapped over a store.

use pcdim_core::dim::{agreement_report, dim_cov, dim_lod_median, dim_lod_ransac, AgreementEntry, AgreementReport, DimProfile, RansacConfig};
use pcdim_core::features::{extract_features, FeatureProfile};
use pcdim_core::octree::{patch_ppl, PplMode, PplVector};
use pcdim_core::rng::{derive_seed, stream};
use pcdim_core::{PatchId, PatchStore, Vec3};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::parallel::Workers;
use crate::tables::{DimRow, FeatureTable};

pub fn describe(store: &PatchStore, levels: u32, mode: PplMode, workers: &Workers) -> Result<Vec<(PatchId, PplVector)>> {
    let rows = workers.try_map(store.patches(), |p| patch_ppl(p, &store.grid, levels, mode).map(|v| (p.id, v)))?;
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum DimMethod {
    Ransac {
        #[serde(default = "default_iterations")]
        iterations: usize,
        #[serde(default = "default_tol")]
        inlier_tol: f64,
    },
    Median {
        #[serde(default = "default_k")]
        k: f64,
    },
}

fn default_iterations() -> usize {
    RansacConfig::default().iterations
}

fn default_tol() -> f64 {
    RansacConfig::default().inlier_tol
}

fn default_k() -> f64 {
    pcdim_core::dim::DEFAULT_MAD_K
}

impl Default for DimMethod {
    fn default() -> Self {
        DimMethod::Ransac { iterations: default_iterations(), inlier_tol: default_tol() }
    }
}

/// `Dim_LOD` from the occupancy profile and `Dim_cov` for every patch. RANSAC
/// draws from a per-patch stream of `seed`. `Dim_cov` is left empty for
/// patches with fewer than 3 points or coincident points.
pub fn dims(store: &PatchStore, levels: u32, method: DimMethod, seed: u64, workers: &Workers) -> Result<Vec<DimRow>> {
    let rows = workers.try_map(store.patches(), |p| -> pcdim_core::Result<DimRow> {
        let ppl = patch_ppl(p, &store.grid, levels, PplMode::Occupancy)?;
        let profile = DimProfile::from_ppl(&ppl)?;
        let est = match method {
            DimMethod::Ransac { iterations, inlier_tol } => {
                let cfg = RansacConfig { iterations, inlier_tol, seed: derive_seed(seed, stream::RANSAC, p.id.0 as u64) };
                dim_lod_ransac(&profile, &cfg)?
            }
            DimMethod::Median { k } => dim_lod_median(&profile, k)?,
        };
        let pts: Vec<Vec3> = p.positions().collect();
        let cov = dim_cov(&pts).ok();
        Ok(DimRow {
            patch_id: p.id,
            dim_lod: Some(est.value),
            confidence: Some(est.confidence),
            dim_cov: cov.as_ref().map(|c| c.value),
            p_dim: cov.as_ref().map(|c| c.p_dim),
            abs_diff: cov.as_ref().map(|c| (est.value - c.value).abs()),
            points: p.points.len(),
        })
    })?;
    Ok(rows)
}

/// Agreement over the rows that have both estimates.
pub fn dim_report(rows: &[DimRow], threshold: f64) -> AgreementReport {
    let entries: Vec<AgreementEntry> = rows
        .iter()
        .filter_map(|r| {
            Some(AgreementEntry { patch_id: r.patch_id, dim_lod: r.dim_lod?, dim_cov: r.dim_cov?, points: r.points })
        })
        .collect();
    agreement_report(&entries, threshold)
}

pub fn features(store: &PatchStore, profile: &FeatureProfile, workers: &Workers) -> Result<FeatureTable> {
    profile.validate(store.schema)?;
    let levels = profile.ppl_levels() as u32;
    let rows = workers.try_map(store.patches(), |p| {
        let ppl = if levels == 0 {
            PplVector::occupancy(Vec::new())
        } else {
            patch_ppl(p, &store.grid, levels, PplMode::Occupancy)?
        };
        extract_features(p, &ppl, profile, store.schema)
    })?;
    let feature_names = profile.features().iter().map(|f| f.name()).collect();
    Ok(FeatureTable {
        feature_names,
        ids: store.patches().iter().map(|p| p.id).collect(),
        labels: store.patches().iter().map(|p| p.dominant_class).collect(),
        mix: store.patches().iter().map(|p| p.mix).collect(),
        rows: rows.into_iter().map(|f| f.values).collect(),
    })
}
