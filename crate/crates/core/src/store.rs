//! Grid partitioning of a point cloud into patches, per-patch statistics and
//! spatial / attribute queries.
//!
//! Cells are half-open `[origin + i * size, origin + (i + 1) * size)` on every
//! bounded axis. In columnar mode z is unbounded and every patch has `k = 0`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::geom::{Aabb, Cube, Polygon, Vec3};
use crate::{ClassId, Error, Result};

/// One LiDAR return.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f32,
    pub num_echo: u32,
    pub class_label: Option<ClassId>,
}

impl Point {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z, intensity: 0.0, num_echo: 1, class_label: None }
    }

    pub fn labelled(x: f64, y: f64, z: f64, class: ClassId) -> Self {
        Self { class_label: Some(class), ..Self::new(x, y, z) }
    }

    pub fn with_attrs(mut self, intensity: f32, num_echo: u32) -> Self {
        self.intensity = intensity;
        self.num_echo = num_echo;
        self
    }

    pub fn xyz(&self) -> Vec3 {
        [self.x, self.y, self.z]
    }
}

/// Which optional attribute columns a point source carries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub intensity: bool,
    pub num_echo: bool,
    pub class: bool,
}

impl Schema {
    pub const FULL: Schema = Schema { intensity: true, num_echo: true, class: true };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridMode {
    /// All three axes bounded: cubic patches.
    Cubic,
    /// Only x and y bounded: vertical columns.
    Columnar,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub cell_size: Vec3,
    #[serde(default)]
    pub origin: Vec3,
    pub mode: GridMode,
}

impl GridSpec {
    pub fn cubic(size: f64) -> Self {
        Self { cell_size: [size; 3], origin: [0.0; 3], mode: GridMode::Cubic }
    }

    /// Columns of `size x size` in xy; `size` is also the z rounding step of
    /// the octree box.
    pub fn columnar(size: f64) -> Self {
        Self { cell_size: [size; 3], origin: [0.0; 3], mode: GridMode::Columnar }
    }

    pub fn with_origin(mut self, origin: Vec3) -> Self {
        self.origin = origin;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.cell_size.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidGrid("cell sizes must be finite and > 0"));
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite"));
        }
        if self.mode == GridMode::Cubic
            && (self.cell_size[0] != self.cell_size[1] || self.cell_size[1] != self.cell_size[2])
        {
            return Err(Error::InvalidGrid("cubic mode needs equal x, y, z edge lengths"));
        }
        Ok(())
    }

    fn axis_index(&self, axis: usize, c: f64) -> i64 {
        libm::floor((c - self.origin[axis]) / self.cell_size[axis]) as i64
    }

    pub fn cell_index(&self, p: Vec3) -> [i64; 3] {
        let k = match self.mode {
            GridMode::Cubic => self.axis_index(2, p[2]),
            GridMode::Columnar => 0,
        };
        [self.axis_index(0, p[0]), self.axis_index(1, p[1]), k]
    }

    /// Centre of a grid cell. Columnar cells report the origin z.
    pub fn cell_center(&self, index: [i64; 3]) -> Vec3 {
        let c = |a: usize| self.origin[a] + (index[a] as f64 + 0.5) * self.cell_size[a];
        match self.mode {
            GridMode::Cubic => [c(0), c(1), c(2)],
            GridMode::Columnar => [c(0), c(1), self.origin[2]],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttrStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl AttrStats {
    fn from_values<I: Iterator<Item = f64>>(values: I) -> Option<Self> {
        let (mut min, mut max, mut sum, mut n) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
        for v in values {
            min = min.min(v);
            max = max.max(v);
            sum += v;
            n += 1;
        }
        if n == 0 {
            return None;
        }
        // rounding in the sum can push the mean an ulp outside [min, max]
        let mean = (sum / n as f64).clamp(min, max);
        Some(Self { min, max, mean })
    }
}

/// Cached per-patch statistics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchStats {
    pub count: usize,
    pub bbox: Aabb,
    pub z: AttrStats,
    pub intensity: Option<AttrStats>,
    pub num_echo: Option<AttrStats>,
    /// Mean z minus the store's reference height.
    pub mean_altitude: f64,
}

impl PatchStats {
    pub fn compute(points: &[Point], schema: Schema, reference_height: f64) -> Result<Self> {
        let bbox = Aabb::from_points(points.iter().map(Point::xyz)).ok_or(Error::EmptyInput)?;
        let z = AttrStats::from_values(points.iter().map(|p| p.z)).ok_or(Error::EmptyInput)?;
        let intensity = schema
            .intensity
            .then(|| AttrStats::from_values(points.iter().map(|p| p.intensity as f64)))
            .flatten();
        let num_echo = schema
            .num_echo
            .then(|| AttrStats::from_values(points.iter().map(|p| p.num_echo as f64)))
            .flatten();
        Ok(Self {
            count: points.len(),
            bbox,
            z,
            intensity,
            num_echo,
            mean_altitude: z.mean - reference_height,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PatchId(pub u32);

impl fmt::Display for PatchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub id: PatchId,
    pub grid_index: [i64; 3],
    pub points: Vec<Point>,
    pub stats: PatchStats,
    pub dominant_class: Option<ClassId>,
    /// Fraction of points carrying `dominant_class`.
    pub mix: Option<f64>,
}

impl Patch {
    /// Builds a patch, computing stats, dominant class and mix.
    pub fn new(
        id: PatchId,
        grid_index: [i64; 3],
        points: Vec<Point>,
        schema: Schema,
        reference_height: f64,
    ) -> Result<Self> {
        let stats = PatchStats::compute(&points, schema, reference_height)?;
        let (dominant_class, mix) = if schema.class { dominant_class(&points) } else { (None, None) };
        Ok(Self { id, grid_index, points, stats, dominant_class, mix })
    }

    /// Root cell used for occupancy quantization.
    ///
    /// Cubic grids use the grid cell itself. Columnar grids use the column
    /// cropped to the patch's z extent, rounded outward to multiples of the
    /// z cell size (half-open, like the xy axes).
    pub fn octree_cube(&self, grid: &GridSpec) -> Result<Cube> {
        let [i, j, k] = self.grid_index;
        let s = grid.cell_size;
        let o = grid.origin;
        let xy_min = [o[0] + i as f64 * s[0], o[1] + j as f64 * s[1]];
        match grid.mode {
            GridMode::Cubic => Cube::with_edges([xy_min[0], xy_min[1], o[2] + k as f64 * s[2]], s),
            GridMode::Columnar => {
                let lo = libm::floor((self.stats.bbox.min[2] - o[2]) / s[2]);
                let hi = libm::floor((self.stats.bbox.max[2] - o[2]) / s[2]) + 1.0;
                Cube::with_edges([xy_min[0], xy_min[1], o[2] + lo * s[2]], [s[0], s[1], (hi - lo) * s[2]])
            }
        }
    }

    pub fn positions(&self) -> impl Iterator<Item = Vec3> + '_ {
        self.points.iter().map(Point::xyz)
    }
}

/// Most frequent label (ties to the smallest id) and its share of all points.
pub fn dominant_class(points: &[Point]) -> (Option<ClassId>, Option<f64>) {
    let mut counts: BTreeMap<ClassId, usize> = BTreeMap::new();
    for c in points.iter().filter_map(|p| p.class_label) {
        *counts.entry(c).or_default() += 1;
    }
    let best = counts.iter().fold(None, |best: Option<(ClassId, usize)>, (&c, &n)| match best {
        Some((_, bn)) if bn >= n => best,
        _ => Some((c, n)),
    });
    match best {
        Some((c, n)) if !points.is_empty() => (Some(c), Some(n as f64 / points.len() as f64)),
        _ => (None, None),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Z,
    Intensity,
    NumEcho,
    /// Mean z relative to the reference height.
    Altitude,
}

impl Attribute {
    pub fn name(&self) -> &'static str {
        match self {
            Attribute::Z => "z",
            Attribute::Intensity => "intensity",
            Attribute::NumEcho => "num_echo",
            Attribute::Altitude => "altitude",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "z" => Attribute::Z,
            "intensity" => Attribute::Intensity,
            "num_echo" => Attribute::NumEcho,
            "altitude" => Attribute::Altitude,
            _ => return None,
        })
    }

    /// The statistic an attribute range is tested against: the patch mean.
    pub fn mean_of(&self, stats: &PatchStats) -> Option<f64> {
        match self {
            Attribute::Z => Some(stats.z.mean),
            Attribute::Intensity => stats.intensity.map(|s| s.mean),
            Attribute::NumEcho => stats.num_echo.map(|s| s.mean),
            Attribute::Altitude => Some(stats.mean_altitude),
        }
    }

    fn available(&self, schema: Schema) -> bool {
        match self {
            Attribute::Intensity => schema.intensity,
            Attribute::NumEcho => schema.num_echo,
            _ => true,
        }
    }
}

/// Closed range predicate on a patch attribute mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttrRange {
    pub attr: Attribute,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SpatialFilter {
    Box(Aabb),
    /// 2-D footprint in xy, z unconstrained.
    Polygon(Polygon),
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Filter {
    pub spatial: Option<SpatialFilter>,
    pub ranges: Vec<AttrRange>,
}

impl Filter {
    pub fn bbox(bbox: Aabb) -> Self {
        Self { spatial: Some(SpatialFilter::Box(bbox)), ranges: Vec::new() }
    }

    pub fn and(mut self, attr: Attribute, lo: f64, hi: f64) -> Self {
        self.ranges.push(AttrRange { attr, lo, hi });
        self
    }
}

/// Immutable set of patches with a column index over the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchStore {
    pub grid: GridSpec,
    pub schema: Schema,
    pub reference_height: f64,
    patches: Vec<Patch>,
    by_cell: BTreeMap<[i64; 3], usize>,
    columns: BTreeMap<(i64, i64), Vec<usize>>,
}

impl PatchStore {
    /// Partitions `points` into grid patches.
    ///
    /// Patch ids follow the lexicographic order of grid indices, so the same
    /// input always yields the same ids.
    pub fn ingest<I>(points: I, grid: GridSpec, schema: Schema, reference_height: f64) -> Result<Self>
    where
        I: IntoIterator<Item = Point>,
    {
        grid.validate()?;
        let mut cells: BTreeMap<[i64; 3], Vec<Point>> = BTreeMap::new();
        let mut n = 0usize;
        for (index, p) in points.into_iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(Error::InvalidPoint { index, reason: "non-finite coordinate" });
            }
            if schema.num_echo && p.num_echo < 1 {
                return Err(Error::InvalidPoint { index, reason: "num_echo must be >= 1" });
            }
            if !p.intensity.is_finite() {
                return Err(Error::InvalidPoint { index, reason: "non-finite intensity" });
            }
            cells.entry(grid.cell_index(p.xyz())).or_default().push(p);
            n += 1;
        }
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let patches = cells
            .into_iter()
            .enumerate()
            .map(|(i, (cell, pts))| Patch::new(PatchId(i as u32), cell, pts, schema, reference_height))
            .collect::<Result<Vec<_>>>()?;
        Self::from_patches(grid, schema, reference_height, patches)
    }

    /// Reassembles a store from already-built patches (e.g. loaded from disk).
    pub fn from_patches(
        grid: GridSpec,
        schema: Schema,
        reference_height: f64,
        mut patches: Vec<Patch>,
    ) -> Result<Self> {
        grid.validate()?;
        if patches.is_empty() {
            return Err(Error::EmptyInput);
        }
        patches.sort_by_key(|p| p.id);
        let mut by_cell = BTreeMap::new();
        let mut columns: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
        for (slot, p) in patches.iter().enumerate() {
            if by_cell.insert(p.grid_index, slot).is_some() {
                return Err(Error::InvalidGrid("two patches share a grid cell"));
            }
            columns.entry((p.grid_index[0], p.grid_index[1])).or_default().push(slot);
        }
        Ok(Self { grid, schema, reference_height, patches, by_cell, columns })
    }

    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn point_count(&self) -> usize {
        self.patches.iter().map(|p| p.points.len()).sum()
    }

    pub fn get(&self, id: PatchId) -> Option<&Patch> {
        // ids are dense after ingest, but loaded stores need not be
        match self.patches.get(id.0 as usize) {
            Some(p) if p.id == id => Some(p),
            _ => self.patches.binary_search_by_key(&id, |p| p.id).ok().map(|i| &self.patches[i]),
        }
    }

    pub fn at_cell(&self, index: [i64; 3]) -> Option<&Patch> {
        self.by_cell.get(&index).map(|&i| &self.patches[i])
    }

    /// Bounding box of every point in the store.
    pub fn extent(&self) -> Aabb {
        let mut bb = self.patches[0].stats.bbox;
        for p in &self.patches[1..] {
            bb.extend(p.stats.bbox.min);
            bb.extend(p.stats.bbox.max);
        }
        bb
    }

    /// Patches whose tight bounding box meets the spatial filter and whose
    /// attribute means fall in every range, in id order.
    pub fn query(&self, filter: &Filter) -> Result<Vec<&Patch>> {
        for r in &filter.ranges {
            if !r.attr.available(self.schema) {
                return Err(Error::MissingAttribute(r.attr.name()));
            }
        }
        let xy_window = match &filter.spatial {
            Some(SpatialFilter::Box(b)) => Some(([b.min[0], b.min[1]], [b.max[0], b.max[1]])),
            Some(SpatialFilter::Polygon(poly)) => {
                let v = poly.vertices();
                let min = v.iter().fold([f64::INFINITY; 2], |m, p| [m[0].min(p[0]), m[1].min(p[1])]);
                let max = v.iter().fold([f64::NEG_INFINITY; 2], |m, p| [m[0].max(p[0]), m[1].max(p[1])]);
                Some((min, max))
            }
            None => None,
        };
        let mut slots: Vec<usize> = match xy_window {
            Some((min, max)) => self.candidate_slots(min, max),
            None => (0..self.patches.len()).collect(),
        };
        slots.sort_unstable();
        Ok(slots
            .into_iter()
            .map(|i| &self.patches[i])
            .filter(|p| self.matches(p, filter))
            .collect())
    }

    fn candidate_slots(&self, min: [f64; 2], max: [f64; 2]) -> Vec<usize> {
        if !(min[0] <= max[0] && min[1] <= max[1]) {
            return Vec::new();
        }
        let lo = [self.grid.axis_index(0, min[0]), self.grid.axis_index(1, min[1])];
        let hi = [self.grid.axis_index(0, max[0]), self.grid.axis_index(1, max[1])];
        let span = (hi[0] - lo[0] + 1).saturating_mul(hi[1] - lo[1] + 1);
        if span as usize > self.columns.len() {
            return self
                .columns
                .iter()
                .filter(|((i, j), _)| (lo[0]..=hi[0]).contains(i) && (lo[1]..=hi[1]).contains(j))
                .flat_map(|(_, v)| v.iter().copied())
                .collect();
        }
        let mut out = Vec::new();
        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                if let Some(v) = self.columns.get(&(i, j)) {
                    out.extend_from_slice(v);
                }
            }
        }
        out
    }

    fn matches(&self, patch: &Patch, filter: &Filter) -> bool {
        let bb = &patch.stats.bbox;
        let spatial = match &filter.spatial {
            None => true,
            Some(SpatialFilter::Box(b)) => b.intersects(bb),
            Some(SpatialFilter::Polygon(poly)) => {
                poly.intersects_rect([bb.min[0], bb.min[1]], [bb.max[0], bb.max[1]])
            }
        };
        spatial
            && filter.ranges.iter().all(|r| match r.attr.mean_of(&patch.stats) {
                Some(v) => r.lo <= v && v <= r.hi,
                None => false,
            })
    }

    /// Dilates `seed` by every patch whose cell centre lies within `radius_xy`
    /// of a seed centre along x and along y, and within `radius_z` along z.
    /// Negative radii are treated as zero; unknown seed ids are ignored.
    pub fn neighbors(&self, seed: &BTreeSet<PatchId>, radius_xy: f64, radius_z: f64) -> BTreeSet<PatchId> {
        let rxy = radius_xy.max(0.0);
        let rz = radius_z.max(0.0);
        let s = self.grid.cell_size;
        let reach = |r: f64, size: f64| libm::floor(r / size * (1.0 + 1e-9)) as i64;
        let (di, dj) = (reach(rxy, s[0]), reach(rxy, s[1]));
        let dk = match self.grid.mode {
            GridMode::Cubic => reach(rz, s[2]),
            GridMode::Columnar => 0,
        };
        let mut out = BTreeSet::new();
        for id in seed {
            let Some(p) = self.get(*id) else { continue };
            out.insert(p.id);
            let c = self.grid.cell_center(p.grid_index);
            let [i0, j0, k0] = p.grid_index;
            for i in i0 - di..=i0 + di {
                for j in j0 - dj..=j0 + dj {
                    for k in k0 - dk..=k0 + dk {
                        let Some(&slot) = self.by_cell.get(&[i, j, k]) else { continue };
                        let q = &self.patches[slot];
                        if within(c, self.grid.cell_center(q.grid_index), rxy, rz) {
                            out.insert(q.id);
                        }
                    }
                }
            }
        }
        out
    }
}

/// Per-axis centre distance test with a relative tolerance for grid rounding.
pub(crate) fn within(a: Vec3, b: Vec3, rxy: f64, rz: f64) -> bool {
    let ok = |d: f64, r: f64| d.abs() <= r * (1.0 + 1e-9) + 1e-12;
    ok(a[0] - b[0], rxy) && ok(a[1] - b[1], rxy) && ok(a[2] - b[2], rz)
}
