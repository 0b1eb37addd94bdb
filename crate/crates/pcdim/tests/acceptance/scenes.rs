//! Synthetic scenes for the acceptance runs. Every scene is a list of
//! primitives clipped to unit grid cells unless stated otherwise.

use pcdim_core::rng::{normal, rng_for, Rng};
use pcdim_core::synth::{generate, Primitive, SceneSpec, Shape};
use pcdim_core::{Aabb, ClassId, Point, Vec3};
use rand::Rng as _;

/// Stream index for scene layout draws, away from the library's streams.
const LAYOUT: u64 = 101;

pub const LINE: ClassId = 1;
pub const PLANE: ClassId = 2;
pub const VOLUME: ClassId = 3;
pub const TREE: ClassId = 4;

pub fn layout_rng(seed: u64) -> Rng {
    rng_for(seed, LAYOUT, 0)
}

/// The unit cell at `c`, shrunk so that no point lands on the next cell's face.
pub fn cell_box(c: [i64; 3]) -> Aabb {
    let lo = [c[0] as f64, c[1] as f64, c[2] as f64];
    Aabb::new(lo, [lo[0] + 0.999_999, lo[1] + 0.999_999, lo[2] + 0.999_999])
}

/// Cell `i` of a flat `w`-wide layout with one empty cell between patches, so
/// noise never spills into a neighbour.
pub fn spaced_cell(i: usize, w: usize) -> [i64; 3] {
    [2 * (i % w) as i64, 2 * (i / w) as i64, 0]
}

fn unit(r: &mut Rng) -> Vec3 {
    loop {
        let v = [normal(r), normal(r), normal(r)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-6 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalized(a: Vec3) -> Vec3 {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

fn axpy(a: f64, x: Vec3, y: Vec3) -> Vec3 {
    [a * x[0] + y[0], a * x[1] + y[1], a * x[2] + y[2]]
}

/// Segment of half-length 1 through `c` along a random direction.
fn random_line(c: Vec3, r: &mut Rng) -> Shape {
    let d = unit(r);
    Shape::Line { start: axpy(-1.0, d, c), end: axpy(1.0, d, c) }
}

/// 2 x 2 square through `c` with a random normal.
fn random_plane(c: Vec3, r: &mut Rng) -> Shape {
    let n = unit(r);
    let u = normalized(cross(n, unit(r)));
    let v = cross(n, u);
    Shape::Rect { origin: axpy(-1.0, u, axpy(-1.0, v, c)), u: u.map(|x| 2.0 * x), v: v.map(|x| 2.0 * x) }
}

/// Tree crown whose level 1 to 3 occupancy goes from volumetric to linear.
pub fn tree_crown(center: Vec3, sigma: f64, segments: usize) -> Shape {
    Shape::Tree { center, crown_sigma: [sigma; 3], segments, segment_length: 0.3 }
}

/// One patch per cell holding a random line, plane, box or tree crown with
/// between 1 and a few thousand points.
pub fn random_patches(n: usize, seed: u64) -> Vec<Point> {
    let mut r = layout_rng(seed);
    let prims = (0..n)
        .map(|i| {
            let cell = [(i % 10) as i64, (i / 10 % 10) as i64, (i / 100) as i64];
            let lo = cell.map(|v| v as f64);
            let c: Vec3 = std::array::from_fn(|a| lo[a] + r.random::<f64>());
            let (shape, density) = match r.random_range(0..5) {
                0 => (random_line(c, &mut r), r.random_range(1.0..1000.0)),
                1 => (random_plane(c, &mut r), r.random_range(1.0..2000.0)),
                2 => {
                    let h: Vec3 = std::array::from_fn(|_| r.random_range(0.01..0.5));
                    (Shape::Box { min: axpy(-1.0, h, c), max: axpy(1.0, h, c) }, r.random_range(10.0..20000.0))
                }
                3 => (tree_crown(c, r.random_range(0.05..0.4), r.random_range(1..30)), r.random_range(10.0..300.0)),
                // a handful of points anywhere in the cell
                _ => (Shape::Box { min: lo, max: lo.map(|v| v + 1.0) }, r.random_range(1.0..8.0)),
            };
            Primitive::new(shape, density, 0).clip(cell_box(cell))
        })
        .collect();
    generate(&SceneSpec { seed, primitives: prims })
}

/// `per_kind` axis-aligned lines, planes and volumes labelled with their
/// dimension. Lines and planes sit at the centre of a level-4 cell slab
/// (offsets `(k + 0.5) / 16`), volumes fill the cell.
pub fn archetypes(per_kind: usize, noise: f64, seed: u64) -> Vec<Point> {
    let mut r = layout_rng(seed);
    let mut prims = Vec::new();
    let slab = |r: &mut Rng| (r.random_range(0..16) as f64 + 0.5) / 16.0;
    for i in 0..3 * per_kind {
        let cell = spaced_cell(i, 30);
        let lo = cell.map(|v| v as f64);
        let axis = r.random_range(0..3);
        let (shape, density, class) = match i / per_kind {
            0 => {
                let mut start: Vec3 = std::array::from_fn(|a| lo[a] + slab(&mut r));
                start[axis] = lo[axis];
                let mut end = start;
                end[axis] += 1.0;
                (Shape::Line { start, end }, 1000.0, LINE)
            }
            1 => {
                let mut origin = lo;
                origin[axis] += slab(&mut r);
                let mut u = [0.0; 3];
                let mut v = [0.0; 3];
                u[(axis + 1) % 3] = 1.0;
                v[(axis + 2) % 3] = 1.0;
                (Shape::Rect { origin, u, v }, 5000.0, PLANE)
            }
            _ => (Shape::Box { min: lo, max: lo.map(|v| v + 1.0) }, 20000.0, VOLUME),
        };
        prims.push(Primitive::new(shape, density, class).noise(noise).clip(cell_box(cell)));
    }
    generate(&SceneSpec { seed, primitives: prims })
}

/// Randomly oriented lines, planes and boxes plus tree crowns (one patch in
/// five), jittered around the cell centre.
pub fn mixed(n: usize, seed: u64) -> Vec<Point> {
    let mut r = layout_rng(seed);
    let prims = (0..n)
        .map(|i| {
            let cell = spaced_cell(i, 25);
            let c: Vec3 = std::array::from_fn(|a| cell[a] as f64 + 0.5 + 0.1 * (r.random::<f64>() - 0.5));
            let (shape, density, class) = match i % 5 {
                0 => (random_line(c, &mut r), 2000.0, LINE),
                1 => (random_plane(c, &mut r), 10000.0, PLANE),
                2 | 3 => {
                    let h: Vec3 = std::array::from_fn(|_| r.random_range(0.3..0.5));
                    (Shape::Box { min: axpy(-1.0, h, c), max: axpy(1.0, h, c) }, 20000.0, VOLUME)
                }
                _ => (tree_crown(c, 0.25, 20), 500.0, TREE),
            };
            Primitive::new(shape, density, class).noise(0.005).clip(cell_box(cell))
        })
        .collect();
    generate(&SceneSpec { seed, primitives: prims })
}

pub const GROUND: ClassId = 0;
pub const WALL: ClassId = 1;
pub const VEGETATION: ClassId = 2;

/// A street `length` metres long and 20 m wide: ground, a facade on each
/// side and two rows of trees. Intensity and echo counts follow the same
/// distribution for every class, so only geometry tells the classes apart.
pub fn street(length: f64, seed: u64) -> Vec<Point> {
    let width = 20.0;
    let attrs = |p: Primitive| p.attrs(40.0, 10.0, 2);
    let mut prims = vec![attrs(
        Primitive::new(Shape::Rect { origin: [0.0, 0.0, 0.25], u: [length, 0.0, 0.1], v: [0.0, width, 0.2] }, 400.0, GROUND)
            .noise(0.01),
    )];
    for y in [0.3, width - 0.3] {
        prims.push(attrs(
            Primitive::new(Shape::Rect { origin: [0.0, y, 0.0], u: [length, 0.0, 0.0], v: [0.0, 0.0, 8.0] }, 300.0, WALL)
                .noise(0.01),
        ));
    }
    let mut r = layout_rng(seed);
    for y in [5.0, width - 5.0] {
        let mut x = 3.0;
        while x < length - 2.0 {
            let center = [x + r.random_range(-0.5..0.5), y + r.random_range(-0.5..0.5), r.random_range(5.0..6.5)];
            prims.push(attrs(Primitive::new(
                Shape::Tree { center, crown_sigma: [1.2, 1.2, 1.5], segments: 2500, segment_length: 0.3 },
                100.0,
                VEGETATION,
            )));
            x += 6.0;
        }
    }
    generate(&SceneSpec { seed, primitives: prims })
}

/// Horizontal square patches of two classes told apart only by a noisy
/// per-patch intensity, so the classes overlap.
pub fn overlapping(n: usize, seed: u64) -> Vec<Point> {
    let mut r = layout_rng(seed);
    let prims = (0..n)
        .map(|i| {
            let cell = [(i % 40) as i64, (i / 40) as i64, 0];
            let class: ClassId = r.random_range(0..2);
            let intensity = 40.0 + 10.0 * class as f64 + 8.0 * normal(&mut r);
            let z = r.random_range(0.1..0.9);
            let lo = cell.map(|v| v as f64);
            Primitive::new(Shape::Rect { origin: [lo[0], lo[1], z], u: [1.0, 0.0, 0.0], v: [0.0, 1.0, 0.0] }, 150.0, class)
                .noise(0.01)
                .attrs(intensity.max(1.0) as f32, 1.0, 2)
                .clip(cell_box(cell))
        })
        .collect();
    generate(&SceneSpec { seed, primitives: prims })
}

/// A `side` x `side` m ground plane (class 0) plus a raised slab (class 1)
/// over its first five rows, 3 m up.
pub fn ground_and_slab(side: usize, seed: u64) -> Vec<Point> {
    let s = side as f64;
    let prims = vec![
        Primitive::new(Shape::Rect { origin: [0.0, 0.0, 0.5], u: [s, 0.0, 0.0], v: [0.0, s, 0.0] }, 100.0, 0).noise(0.01),
        Primitive::new(Shape::Rect { origin: [0.0, 0.0, 3.5], u: [s, 0.0, 0.0], v: [0.0, 5.0, 0.0] }, 100.0, 1).noise(0.01),
    ];
    generate(&SceneSpec { seed, primitives: prims })
}

/// `n` patches of about `per_patch` points each, half boxes and half planes.
pub fn dense_patches(n: usize, per_patch: f64, seed: u64) -> Vec<Point> {
    let prims = (0..n)
        .map(|i| {
            let cell = [(i % 10) as i64, (i / 10) as i64, 0];
            let lo = cell.map(|v| v as f64);
            let shape = if i % 2 == 0 {
                Shape::Box { min: lo, max: lo.map(|v| v + 1.0) }
            } else {
                Shape::Rect { origin: [lo[0], lo[1], lo[2] + 0.5], u: [1.0, 0.0, 0.0], v: [0.0, 1.0, 0.0] }
            };
            Primitive::new(shape, per_patch, 0).attrs(30.0, 5.0, 3).clip(cell_box(cell))
        })
        .collect();
    generate(&SceneSpec { seed, primitives: prims })
}
