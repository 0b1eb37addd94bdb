//! Synthetic scenes of lines, planes, volumes and tree-like composites, plus
//! brute-force oracles for the descriptors.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::geom::{Aabb, Cube, Vec3};
use crate::rng::{normal, rng_for, stream, Rng};
use crate::store::Point;
use crate::ClassId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Shape {
    /// Segment; density in points per metre.
    Line { start: Vec3, end: Vec3 },
    /// Parallelogram `origin + s u + t v`, `s, t in [0, 1)`; points per m².
    Rect { origin: Vec3, u: Vec3, v: Vec3 },
    /// Axis-aligned solid box; points per m³.
    Box { min: Vec3, max: Vec3 },
    /// Gaussian crown of short randomly oriented segments; density in points
    /// per metre of segment.
    Tree { center: Vec3, crown_sigma: Vec3, segments: usize, segment_length: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    pub density: f64,
    /// Gaussian noise sigma per axis, metres.
    #[serde(default)]
    pub noise: f64,
    pub class: ClassId,
    #[serde(default)]
    pub intensity: f32,
    #[serde(default)]
    pub intensity_jitter: f32,
    /// Echo counts are drawn uniformly in `1..=max_echo`.
    #[serde(default = "one")]
    pub max_echo: u32,
    /// Points outside this box are dropped.
    #[serde(default)]
    pub clip: Option<Aabb>,
}

fn one() -> u32 {
    1
}

impl Primitive {
    pub fn new(shape: Shape, density: f64, class: ClassId) -> Self {
        Self { shape, density, noise: 0.0, class, intensity: 0.0, intensity_jitter: 0.0, max_echo: 1, clip: None }
    }

    pub fn noise(mut self, sigma: f64) -> Self {
        self.noise = sigma;
        self
    }

    pub fn clip(mut self, bbox: Aabb) -> Self {
        self.clip = Some(bbox);
        self
    }

    pub fn attrs(mut self, intensity: f32, jitter: f32, max_echo: u32) -> Self {
        self.intensity = intensity;
        self.intensity_jitter = jitter;
        self.max_echo = max_echo.max(1);
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub primitives: Vec<Primitive>,
}

impl SceneSpec {
    pub fn validate(&self) -> crate::Result<()> {
        for p in &self.primitives {
            if !(p.density > 0.0) || !(p.noise >= 0.0) {
                return Err(crate::Error::InvalidConfig("densities must be > 0 and noise >= 0".into()));
            }
        }
        Ok(())
    }
}

fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn norm(a: Vec3) -> f64 {
    libm::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])
}

fn count(measure: f64, density: f64) -> usize {
    (libm::round(measure * density) as usize).max(1)
}

fn unit_vector(rng: &mut Rng) -> Vec3 {
    loop {
        let v = [normal(rng), normal(rng), normal(rng)];
        let n = norm(v);
        if n > 1e-9 {
            return scale(v, 1.0 / n);
        }
    }
}

fn raw_positions(shape: &Shape, density: f64, rng: &mut Rng) -> Vec<Vec3> {
    match shape {
        Shape::Line { start, end } => {
            let d = add(*end, scale(*start, -1.0));
            (0..count(norm(d), density)).map(|_| add(*start, scale(d, rng.random::<f64>()))).collect()
        }
        Shape::Rect { origin, u, v } => {
            let cross = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
            (0..count(norm(cross), density))
                .map(|_| add(*origin, add(scale(*u, rng.random::<f64>()), scale(*v, rng.random::<f64>()))))
                .collect()
        }
        Shape::Box { min, max } => {
            let e = [max[0] - min[0], max[1] - min[1], max[2] - min[2]];
            (0..count(e[0] * e[1] * e[2], density))
                .map(|_| core::array::from_fn(|a| min[a] + e[a] * rng.random::<f64>()))
                .collect()
        }
        Shape::Tree { center, crown_sigma, segments, segment_length } => {
            let per = count(*segment_length, density);
            let mut out = Vec::with_capacity(segments * per);
            for _ in 0..*segments {
                let mid: Vec3 = core::array::from_fn(|a| center[a] + crown_sigma[a] * normal(rng));
                let dir = unit_vector(rng);
                for _ in 0..per {
                    let t = rng.random::<f64>() - 0.5;
                    out.push(add(mid, scale(dir, t * segment_length)));
                }
            }
            out
        }
    }
}

/// Samples every primitive; each primitive has its own RNG stream so editing
/// one does not reshuffle the others.
pub fn generate(spec: &SceneSpec) -> Vec<Point> {
    let mut out = Vec::new();
    for (i, prim) in spec.primitives.iter().enumerate() {
        let mut rng = rng_for(spec.seed, stream::SYNTH, i as u64);
        for p in raw_positions(&prim.shape, prim.density, &mut rng) {
            let p: Vec3 = if prim.noise > 0.0 {
                core::array::from_fn(|a| p[a] + prim.noise * normal(&mut rng))
            } else {
                p
            };
            let intensity = (prim.intensity + prim.intensity_jitter * normal(&mut rng) as f32).max(0.0);
            let num_echo = if prim.max_echo > 1 { rng.random_range(1..=prim.max_echo) } else { 1 };
            if prim.clip.is_some_and(|c| !c.contains(p)) {
                continue;
            }
            out.push(Point {
                x: p[0],
                y: p[1],
                z: p[2],
                intensity,
                num_echo,
                class_label: Some(prim.class),
            });
        }
    }
    out
}

/// Occupied cell count at `level` from an explicit dense boolean voxel grid.
///
/// # Panics
/// If `level > 8` (the grid would not fit comfortably in memory).
pub fn oracle_ppl(points: &[Vec3], cube: &Cube, level: u32) -> u64 {
    assert!(level <= 8, "oracle grid limited to level 8");
    let n = 1usize << level;
    let mut grid = vec![false; n * n * n];
    for p in points {
        let idx: [usize; 3] = core::array::from_fn(|a| {
            let q = libm::floor((p[a] - cube.min[a]) / cube.edges[a] * n as f64);
            if q < 0.0 {
                0
            } else {
                (q as usize).min(n - 1)
            }
        });
        grid[idx[0] + n * (idx[1] + n * idx[2])] = true;
    }
    grid.iter().filter(|&&b| b).count() as u64
}
