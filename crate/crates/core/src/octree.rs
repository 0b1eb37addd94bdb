//! Octree cell occupancy per level, computed from Morton keys without
//! building an octree, and the MidOc level-of-detail ordering.
//!
//! A level-`L` key interleaves the `L`-bit per-axis cell indices as
//! `...z1 y1 x1 z0 y0 x0`, so the level-`l` ancestor of a key is the key
//! shifted right by `3 * (L - l)`.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geom::{dist2, Cube, Vec3};
use crate::store::{GridSpec, Patch};
use crate::{Error, Result};

/// Deepest level whose key fits in 63 bits.
pub const MAX_LEVEL: u32 = 21;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PplMode {
    /// Number of occupied cells per level.
    Occupancy,
    /// Number of MidOc picks per level (exclusive across levels).
    Midoc,
}

/// Points-per-level vector `(O_1, .., O_n)`. Level 0 is implicit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PplVector {
    pub counts: Vec<u64>,
    pub mode: PplMode,
}

impl PplVector {
    pub fn occupancy(counts: Vec<u64>) -> Self {
        Self { counts, mode: PplMode::Occupancy }
    }

    pub fn levels(&self) -> usize {
        self.counts.len()
    }

    /// `O_level` for a 1-based level.
    pub fn at(&self, level: usize) -> u64 {
        self.counts[level - 1]
    }
}

fn check_level(level: u32) -> Result<()> {
    if (1..=MAX_LEVEL).contains(&level) {
        Ok(())
    } else {
        Err(Error::LevelOutOfRange { level, max: MAX_LEVEL })
    }
}

/// Spreads the low 21 bits of `v` so that two zero bits separate each bit.
fn spread3(v: u64) -> u64 {
    let mut w = v & 0x1f_ffff;
    w = (w | w << 32) & 0x001f_0000_0000_ffff;
    w = (w | w << 16) & 0x001f_0000_ff00_00ff;
    w = (w | w << 8) & 0x100f_00f0_0f00_f00f;
    w = (w | w << 4) & 0x10c3_0c30_c30c_30c3;
    w = (w | w << 2) & 0x1249_2492_4924_9249;
    w
}

pub fn interleave(ix: u64, iy: u64, iz: u64) -> u64 {
    spread3(ix) | spread3(iy) << 1 | spread3(iz) << 2
}

/// Per-axis cell index `floor((c - lo) / edge * 2^level)`, clamped to the cube.
#[inline]
pub fn quantize(c: f64, lo: f64, edge: f64, level: u32) -> u64 {
    let cells = (1u64 << level) as f64;
    let q = libm::floor((c - lo) / edge * cells);
    if q <= 0.0 {
        0
    } else if q >= cells - 1.0 {
        (1u64 << level) - 1
    } else {
        q as u64
    }
}

#[inline]
fn key_unchecked(p: Vec3, cube: &Cube, level: u32) -> u64 {
    interleave(
        quantize(p[0], cube.min[0], cube.edges[0], level),
        quantize(p[1], cube.min[1], cube.edges[1], level),
        quantize(p[2], cube.min[2], cube.edges[2], level),
    )
}

/// Morton key of the level-`level` cell of `cube` containing `p`.
pub fn morton_code(p: Vec3, cube: &Cube, level: u32) -> Result<u64> {
    check_level(level)?;
    let cube = Cube::with_edges(cube.min, cube.edges)?;
    Ok(key_unchecked(p, &cube, level))
}

/// Centre of the level-`level` cell with key `key`.
pub fn cell_center(key: u64, cube: &Cube, level: u32) -> Vec3 {
    let cells = (1u64 << level) as f64;
    let mut idx = [0u64; 3];
    for bit in 0..level as u64 {
        for (a, slot) in idx.iter_mut().enumerate() {
            *slot |= ((key >> (3 * bit + a as u64)) & 1) << bit;
        }
    }
    core::array::from_fn(|a| cube.min[a] + (idx[a] as f64 + 0.5) / cells * cube.edges[a])
}

fn level_keys(points: &[Vec3], cube: &Cube, level: u32) -> Result<Vec<u64>> {
    check_level(level)?;
    let cube = Cube::with_edges(cube.min, cube.edges)?;
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(points.iter().map(|p| key_unchecked(*p, &cube, level)).collect())
}

/// Occupied cell count at levels `1..=max_level`.
pub fn ppl_occupancy(points: &[Vec3], cube: &Cube, max_level: u32) -> Result<PplVector> {
    let mut keys = level_keys(points, cube, max_level)?;
    keys.sort_unstable();
    let mut counts = vec![0u64; max_level as usize];
    for (l, count) in counts.iter_mut().enumerate() {
        let shift = 3 * (max_level - 1 - l as u32);
        let mut prev = None;
        for k in &keys {
            let anc = k >> shift;
            if prev != Some(anc) {
                *count += 1;
                prev = Some(anc);
            }
        }
    }
    Ok(PplVector::occupancy(counts))
}

/// Point permutation storing level of detail implicitly in the point order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MidOcOrdering {
    /// Input indices, picks of level 1 first, then level 2, .., then the rest.
    pub order: Vec<usize>,
    /// `boundaries[l]` = number of leading entries covering levels `1..=l+1`.
    pub boundaries: Vec<usize>,
}

impl MidOcOrdering {
    /// Prefix of `order` holding the representatives of levels `1..=level`.
    pub fn prefix(&self, level: usize) -> &[usize] {
        if level == 0 {
            return &[];
        }
        &self.order[..self.boundaries[level - 1]]
    }
}

/// MidOc ordering: at each level, every occupied cell that does not yet hold
/// a picked point gets one representative, the unpicked point closest to the
/// cell centre (ties to the lowest input index).
pub fn midoc_order(points: &[Vec3], cube: &Cube, max_level: u32) -> Result<(MidOcOrdering, PplVector)> {
    let keys = level_keys(points, cube, max_level)?;
    let mut by_key: Vec<usize> = (0..points.len()).collect();
    by_key.sort_unstable_by_key(|&i| (keys[i], i));

    let mut picked = vec![false; points.len()];
    let mut order = Vec::with_capacity(points.len());
    let mut boundaries = Vec::with_capacity(max_level as usize);
    let mut counts = Vec::with_capacity(max_level as usize);

    for level in 1..=max_level {
        let shift = 3 * (max_level - level);
        let represented: BTreeSet<u64> =
            order.iter().map(|&i: &usize| keys[i] >> shift).collect();
        let mut picks = 0u64;
        let mut start = 0;
        while start < by_key.len() {
            let cell = keys[by_key[start]] >> shift;
            let mut end = start;
            while end < by_key.len() && keys[by_key[end]] >> shift == cell {
                end += 1;
            }
            if !represented.contains(&cell) {
                let center = cell_center(cell, cube, level);
                let best = by_key[start..end]
                    .iter()
                    .copied()
                    .filter(|&i| !picked[i])
                    .min_by(|&a, &b| dist2(points[a], center).total_cmp(&dist2(points[b], center)).then(a.cmp(&b)));
                if let Some(i) = best {
                    picked[i] = true;
                    order.push(i);
                    picks += 1;
                }
            }
            start = end;
        }
        counts.push(picks);
        boundaries.push(order.len());
    }
    order.extend((0..points.len()).filter(|&i| !picked[i]));
    Ok((MidOcOrdering { order, boundaries }, PplVector { counts, mode: PplMode::Midoc }))
}

/// `ppl` of a stored patch over its octree cube (see [`Patch::octree_cube`]).
pub fn patch_ppl(patch: &Patch, grid: &GridSpec, max_level: u32, mode: PplMode) -> Result<PplVector> {
    let cube = patch.octree_cube(grid)?;
    let pts: Vec<Vec3> = patch.positions().collect();
    match mode {
        PplMode::Occupancy => ppl_occupancy(&pts, &cube, max_level),
        PplMode::Midoc => midoc_order(&pts, &cube, max_level).map(|(_, ppl)| ppl),
    }
}
