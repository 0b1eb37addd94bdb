//! Small geometric primitives shared by the store and the descriptors.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Vec3 = [f64; 3];

/// Axis-aligned bounding box, closed on both ends.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    /// Tight box around `points`; `None` when empty.
    pub fn from_points<I: IntoIterator<Item = Vec3>>(points: I) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut bb = Self { min: first, max: first };
        for p in it {
            bb.extend(p);
        }
        Some(bb)
    }

    pub fn extend(&mut self, p: Vec3) {
        for a in 0..3 {
            self.min[a] = self.min[a].min(p[a]);
            self.max[a] = self.max[a].max(p[a]);
        }
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|a| self.min[a] <= p[a] && p[a] <= self.max[a])
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..3).all(|a| self.min[a] <= other.max[a] && other.min[a] <= self.max[a])
    }

    pub fn extent(&self) -> Vec3 {
        [
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        ]
    }

    pub fn area_xy(&self) -> f64 {
        let e = self.extent();
        e[0] * e[1]
    }
}

/// Root cell of an occupancy octree.
///
/// Each axis is split into `2^level` bins of its own edge length, so a cube is
/// the usual case but columnar patches may use a taller box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub min: Vec3,
    pub edges: Vec3,
}

impl Cube {
    pub fn new(min: Vec3, edge: f64) -> Result<Self> {
        Self::with_edges(min, [edge; 3])
    }

    pub fn with_edges(min: Vec3, edges: Vec3) -> Result<Self> {
        if edges.iter().any(|e| !(e.is_finite() && *e > 0.0)) || min.iter().any(|m| !m.is_finite()) {
            return Err(Error::DegenerateCube);
        }
        Ok(Self { min, edges })
    }

    pub fn max(&self) -> Vec3 {
        [
            self.min[0] + self.edges[0],
            self.min[1] + self.edges[1],
            self.min[2] + self.edges[2],
        ]
    }

    pub fn center(&self) -> Vec3 {
        [
            self.min[0] + 0.5 * self.edges[0],
            self.min[1] + 0.5 * self.edges[1],
            self.min[2] + 0.5 * self.edges[2],
        ]
    }
}

pub(crate) fn dist2(a: Vec3, b: Vec3) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

/// Simple 2-D polygon in the xy plane used as a query footprint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    vertices: alloc::vec::Vec<[f64; 2]>,
}

impl Polygon {
    pub fn new(vertices: alloc::vec::Vec<[f64; 2]>) -> Result<Self> {
        if vertices.len() < 3 || vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::DegeneratePolygon);
        }
        let poly = Self { vertices };
        if poly.signed_area().abs() <= f64::EPSILON {
            return Err(Error::DegeneratePolygon);
        }
        Ok(poly)
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        let mut acc = 0.0;
        for i in 0..n {
            let [x0, y0] = self.vertices[i];
            let [x1, y1] = self.vertices[(i + 1) % n];
            acc += x0 * y1 - x1 * y0;
        }
        0.5 * acc
    }

    /// Even-odd point in polygon test.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let n = self.vertices.len();
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let [xi, yi] = self.vertices[i];
            let [xj, yj] = self.vertices[j];
            if (yi > p[1]) != (yj > p[1]) && p[0] < (xj - xi) * (p[1] - yi) / (yj - yi) + xi {
                inside = !inside;
            }
            j = i;
        }
        inside
    }

    /// Whether the polygon and the closed rectangle `[min, max]` share any point.
    pub fn intersects_rect(&self, min: [f64; 2], max: [f64; 2]) -> bool {
        let in_rect = |p: [f64; 2]| min[0] <= p[0] && p[0] <= max[0] && min[1] <= p[1] && p[1] <= max[1];
        if self.vertices.iter().any(|v| in_rect(*v)) {
            return true;
        }
        let corners = [min, [max[0], min[1]], max, [min[0], max[1]]];
        if corners.iter().any(|c| self.contains(*c)) {
            return true;
        }
        let n = self.vertices.len();
        (0..n).any(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            (0..4).any(|k| segments_intersect(a, b, corners[k], corners[(k + 1) % 4]))
        })
    }
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

fn segments_intersect(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}
