//! On-disk patch store: a directory holding `manifest.txt` and one binary
//! block per patch under `patches/`.
//!
//! The manifest is `key = value` lines (`#` starts a comment). Besides the
//! grid and schema it caches every patch's statistics, one `patch` line each:
//!
//! ```text
//! patch = id i j k count dominant mix bbox_min(3) bbox_max(3) z(min max mean)
//!         intensity(min max mean) num_echo(min max mean) mean_altitude
//! ```
//!
//! Absent values are written as `-`. A block is a little-endian `u64` point
//! count, the `f64` xyz triples, then three 32-bit columns: `f32` intensity,
//! `u32` num_echo and `u32` class (`u32::MAX` when unlabelled).

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use pcdim_core::{Aabb, AttrStats, GridMode, GridSpec, Patch, PatchId, PatchStats, PatchStore, Point, Schema};

use crate::error::{Context, Error, Result};

pub const MANIFEST: &str = "manifest.txt";
const FORMAT: &str = "pcdim-store";
const VERSION: u32 = 1;
const NO_CLASS: u32 = u32::MAX;

fn block_path(dir: &Path, id: PatchId) -> PathBuf {
    dir.join("patches").join(format!("{id}.bin"))
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

fn attr(a: Option<AttrStats>) -> String {
    a.map_or_else(|| "- - -".to_string(), |a| format!("{} {} {}", a.min, a.max, a.mean))
}

fn triple(v: [f64; 3]) -> String {
    format!("{} {} {}", v[0], v[1], v[2])
}

pub fn save_store(store: &PatchStore, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("patches")).at(dir)?;
    let mut m = String::new();
    let g = &store.grid;
    let _ = writeln!(m, "format = {FORMAT}");
    let _ = writeln!(m, "version = {VERSION}");
    let _ = writeln!(m, "grid.mode = {}", match g.mode {
        GridMode::Cubic => "cubic",
        GridMode::Columnar => "columnar",
    });
    let _ = writeln!(m, "grid.cell_size = {}", triple(g.cell_size));
    let _ = writeln!(m, "grid.origin = {}", triple(g.origin));
    let s = store.schema;
    let _ = writeln!(m, "schema.intensity = {}", s.intensity);
    let _ = writeln!(m, "schema.num_echo = {}", s.num_echo);
    let _ = writeln!(m, "schema.class = {}", s.class);
    let _ = writeln!(m, "reference_height = {}", store.reference_height);
    let _ = writeln!(m, "patches = {}", store.len());
    let _ = writeln!(
        m,
        "# patch = id i j k count dominant mix bbox_min(3) bbox_max(3) z(min max mean) intensity(3) num_echo(3) mean_altitude"
    );
    for p in store.patches() {
        let st = &p.stats;
        let [i, j, k] = p.grid_index;
        let _ = writeln!(
            m,
            "patch = {} {i} {j} {k} {} {} {} {} {} {} {} {} {} {} {}",
            p.id,
            st.count,
            opt(p.dominant_class),
            opt(p.mix),
            triple(st.bbox.min),
            triple(st.bbox.max),
            st.z.min,
            st.z.max,
            st.z.mean,
            attr(st.intensity),
            attr(st.num_echo),
            st.mean_altitude
        );
        write_block(&block_path(dir, p.id), &p.points)?;
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, m).at(&path)
}

fn write_block(path: &Path, points: &[Point]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).at(path)?);
    let mut buf = Vec::with_capacity(8 + points.len() * 36);
    buf.extend_from_slice(&(points.len() as u64).to_le_bytes());
    for p in points {
        for c in [p.x, p.y, p.z] {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    for p in points {
        buf.extend_from_slice(&p.intensity.to_le_bytes());
    }
    for p in points {
        buf.extend_from_slice(&p.num_echo.to_le_bytes());
    }
    for p in points {
        buf.extend_from_slice(&p.class_label.unwrap_or(NO_CLASS).to_le_bytes());
    }
    w.write_all(&buf).at(path)?;
    w.flush().at(path)
}

fn read_block(path: &Path) -> Result<Vec<Point>> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path).at(path)?).read_to_end(&mut bytes).at(path)?;
    if bytes.len() < 8 {
        return Err(Error::format(path, "truncated block header"));
    }
    let n = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    if n.checked_mul(36).and_then(|b| b.checked_add(8)) != Some(bytes.len()) {
        return Err(Error::format(path, format!("block size {} does not match {n} points", bytes.len())));
    }
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let (xyz, inten, echo, class) = (8, 8 + 24 * n, 8 + 28 * n, 8 + 32 * n);
    Ok((0..n)
        .map(|i| {
            let c = u32_at(class + 4 * i);
            Point {
                x: f64_at(xyz + 24 * i),
                y: f64_at(xyz + 24 * i + 8),
                z: f64_at(xyz + 24 * i + 16),
                intensity: f32::from_bits(u32_at(inten + 4 * i)),
                num_echo: u32_at(echo + 4 * i),
                class_label: (c != NO_CLASS).then_some(c),
            }
        })
        .collect())
}

struct Manifest<'a> {
    path: &'a Path,
    entries: Vec<(u64, String, String)>,
}

impl<'a> Manifest<'a> {
    fn parse(path: &'a Path, text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::parse(path, n as u64 + 1, "expected key = value"))?;
            entries.push((n as u64 + 1, k.trim().to_string(), v.trim().to_string()));
        }
        Ok(Self { path, entries })
    }

    fn get(&self, key: &str) -> Result<(u64, &str)> {
        self.entries
            .iter()
            .find(|(_, k, _)| k == key)
            .map(|(n, _, v)| (*n, v.as_str()))
            .ok_or_else(|| Error::format(self.path, format!("manifest lacks {key:?}")))
    }

    fn value<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let (n, v) = self.get(key)?;
        v.parse().map_err(|_| Error::parse(self.path, n, format!("bad value for {key}: {v:?}")))
    }

    fn triple(&self, key: &str) -> Result<[f64; 3]> {
        let (n, v) = self.get(key)?;
        let vals: Vec<f64> = v.split_whitespace().map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| {
            Error::parse(self.path, n, format!("bad value for {key}: {v:?}"))
        })?;
        vals.try_into().map_err(|_| Error::parse(self.path, n, format!("{key} needs 3 numbers")))
    }
}

struct Fields<'a> {
    it: std::str::SplitWhitespace<'a>,
}

impl Fields<'_> {
    fn next<T: std::str::FromStr>(&mut self) -> Option<T> {
        self.it.next()?.parse().ok()
    }

    fn opt<T: std::str::FromStr>(&mut self) -> Option<Option<T>> {
        match self.it.next()? {
            "-" => Some(None),
            s => s.parse().ok().map(Some),
        }
    }

    fn vec3(&mut self) -> Option<[f64; 3]> {
        Some([self.next()?, self.next()?, self.next()?])
    }

    fn attr(&mut self) -> Option<Option<AttrStats>> {
        let (a, b, c) = (self.opt()?, self.opt()?, self.opt()?);
        Some(match (a, b, c) {
            (Some(min), Some(max), Some(mean)) => Some(AttrStats { min, max, mean }),
            (None, None, None) => None,
            _ => return None,
        })
    }
}

fn parse_patch_line(v: &str) -> Option<(PatchId, [i64; 3], usize, Option<u32>, Option<f64>, PatchStats)> {
    let mut f = Fields { it: v.split_whitespace() };
    let id = PatchId(f.next()?);
    let index = [f.next()?, f.next()?, f.next()?];
    let count: usize = f.next()?;
    let dominant = f.opt()?;
    let mix = f.opt()?;
    let bbox = Aabb::new(f.vec3()?, f.vec3()?);
    let z = AttrStats { min: f.next()?, max: f.next()?, mean: f.next()? };
    let intensity = f.attr()?;
    let num_echo = f.attr()?;
    let mean_altitude = f.next()?;
    if f.it.next().is_some() {
        return None;
    }
    Some((id, index, count, dominant, mix, PatchStats { count, bbox, z, intensity, num_echo, mean_altitude }))
}

/// Loads a store; patch statistics come from the manifest cache.
pub fn load_store(dir: &Path) -> Result<PatchStore> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).at(&path)?;
    let m = Manifest::parse(&path, &text)?;
    if m.get("format")?.1 != FORMAT {
        return Err(Error::format(&path, "not a pcdim store manifest"));
    }
    let version: u32 = m.value("version")?;
    if version != VERSION {
        return Err(Error::format(&path, format!("unsupported store version {version}")));
    }
    let mode = match m.get("grid.mode")? {
        (_, "cubic") => GridMode::Cubic,
        (_, "columnar") => GridMode::Columnar,
        (n, other) => return Err(Error::parse(&path, n, format!("unknown grid mode {other:?}"))),
    };
    let grid = GridSpec { cell_size: m.triple("grid.cell_size")?, origin: m.triple("grid.origin")?, mode };
    let schema = Schema {
        intensity: m.value("schema.intensity")?,
        num_echo: m.value("schema.num_echo")?,
        class: m.value("schema.class")?,
    };
    let reference_height: f64 = m.value("reference_height")?;
    let declared: usize = m.value("patches")?;
    let mut patches = Vec::with_capacity(declared);
    for (n, _, v) in m.entries.iter().filter(|(_, k, _)| k == "patch") {
        let (id, grid_index, count, dominant_class, mix, stats) =
            parse_patch_line(v).ok_or_else(|| Error::parse(&path, *n, "malformed patch line"))?;
        let block = block_path(dir, id);
        let points = read_block(&block)?;
        if points.len() != count {
            return Err(Error::format(&block, format!("holds {} points, manifest says {count}", points.len())));
        }
        patches.push(Patch { id, grid_index, points, stats, dominant_class, mix });
    }
    if patches.len() != declared {
        return Err(Error::format(&path, format!("{} patch lines, header says {declared}", patches.len())));
    }
    Ok(PatchStore::from_patches(grid, schema, reference_height, patches)?)
}
