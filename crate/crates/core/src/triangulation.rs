//! Delaunay triangulation of landmark points and point location.
//!
//! The triangulator is Bowyer-Watson. Instead of a finite super-triangle
//! it keeps one "ghost" triangle `(a, b, INF)` per convex-hull edge, so the
//! hull is tiled exactly no matter how thin the outer triangles are. A
//! point conflicts with a ghost triangle when it lies strictly outside the
//! hull edge, or on the edge's supporting line strictly between `a` and
//! `b`. Points are inserted in input order, which fixes the resolution of
//! cocircular ties.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::geometry::{incircle, orient, Point, REL_EPS};

/// Barycentric slack used when deciding whether a point is inside a
/// triangle; points on shared edges belong to both candidates.
pub const CONTAINMENT_EPS: f64 = 1e-12;

const INF: usize = usize::MAX;

#[derive(Debug, Error, PartialEq)]
pub enum TriangulationError {
    #[error("at least 3 points are required, got {0}")]
    TooFewPoints(usize),
    #[error("all points are collinear")]
    Collinear,
    #[error("points {0} and {1} are identical")]
    DuplicatePoint(usize, usize),
    #[error("point {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("degenerate triangle")]
    DegenerateTriangle,
    #[error("numerical failure while inserting point {0}")]
    Numerical(usize),
    #[error("mesh text line {line}: {reason}")]
    Syntax { line: usize, reason: String },
}

/// Counter-clockwise (positive signed area) triangles over a point list
/// owned elsewhere, sorted lexicographically after rotating each triangle
/// so that its smallest vertex index comes first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriangleMesh {
    vertex_count: usize,
    triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn corners(&self, points: &[Point], t: usize) -> [Point; 3] {
        let [i, j, k] = self.triangles[t];
        [points[i], points[j], points[k]]
    }

    /// One `i j k` line per triangle.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for [i, j, k] in &self.triangles {
            let _ = writeln!(out, "{i} {j} {k}");
        }
        out
    }

    pub fn from_text(text: &str, vertex_count: usize) -> Result<Self, TriangulationError> {
        let mut triangles = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let idx: Vec<usize> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| TriangulationError::Syntax {
                    line: n + 1,
                    reason: format!("{line:?} is not three vertex indices"),
                })?;
            match idx.as_slice() {
                &[i, j, k] if i < vertex_count && j < vertex_count && k < vertex_count => {
                    triangles.push([i, j, k])
                }
                _ => {
                    return Err(TriangulationError::Syntax {
                        line: n + 1,
                        reason: format!("{line:?} is not three valid vertex indices"),
                    })
                }
            }
        }
        Ok(Self {
            vertex_count,
            triangles,
        })
    }
}

pub fn delaunay(points: &[Point]) -> Result<TriangleMesh, TriangulationError> {
    if points.len() < 3 {
        return Err(TriangulationError::TooFewPoints(points.len()));
    }
    if let Some(i) = points.iter().position(|p| !p.is_finite()) {
        return Err(TriangulationError::NonFinite(i));
    }
    check_duplicates(points)?;

    let (i0, i1) = (0, 1);
    let i2 = (2..points.len())
        .find(|&k| orient(points[i0], points[i1], points[k]) != 0.0)
        .ok_or(TriangulationError::Collinear)?;

    let mut b = Builder::new(points);
    if orient(points[i0], points[i1], points[i2]) > 0.0 {
        b.seed([i0, i1, i2]);
    } else {
        b.seed([i0, i2, i1]);
    }
    for k in (2..points.len()).filter(|&k| k != i2) {
        b.insert(k)?;
    }
    Ok(b.finish())
}

fn check_duplicates(points: &[Point]) -> Result<(), TriangulationError> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        points[i]
            .x
            .total_cmp(&points[j].x)
            .then(points[i].y.total_cmp(&points[j].y))
            .then(i.cmp(&j))
    });
    for w in order.windows(2) {
        if points[w[0]] == points[w[1]] {
            return Err(TriangulationError::DuplicatePoint(w[0].min(w[1]), w[0].max(w[1])));
        }
    }
    Ok(())
}

struct Builder<'a> {
    pts: &'a [Point],
    tris: Vec<[usize; 3]>,
    alive: Vec<bool>,
    edges: HashMap<(usize, usize), usize>,
    // Scratch marks, compared against `stamp` to avoid clearing per insert.
    mark: Vec<u32>,
    stamp: u32,
}

impl<'a> Builder<'a> {
    fn new(pts: &'a [Point]) -> Self {
        Self {
            pts,
            tris: Vec::with_capacity(pts.len() * 4),
            alive: Vec::with_capacity(pts.len() * 4),
            edges: HashMap::with_capacity(pts.len() * 12),
            mark: Vec::new(),
            stamp: 0,
        }
    }

    fn seed(&mut self, t: [usize; 3]) {
        self.add(t);
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            self.add([b, a, INF]);
        }
    }

    fn add(&mut self, t: [usize; 3]) {
        let id = self.tris.len();
        self.tris.push(t);
        self.alive.push(true);
        self.mark.push(0);
        for e in edges_of(t) {
            self.edges.insert(e, id);
        }
    }

    fn kill(&mut self, id: usize) {
        self.alive[id] = false;
        for e in edges_of(self.tris[id]) {
            if self.edges.get(&e) == Some(&id) {
                self.edges.remove(&e);
            }
        }
    }

    fn conflicts(&self, t: [usize; 3], p: Point) -> bool {
        let [a, b, c] = t;
        if c == INF {
            let (pa, pb) = (self.pts[a], self.pts[b]);
            let o = orient(pa, pb, p);
            if o > 0.0 {
                return true;
            }
            o == 0.0 && strictly_between(pa, pb, p)
        } else {
            incircle(self.pts[a], self.pts[b], self.pts[c], p) > 0.0
        }
    }

    fn find_start(&self, p: Point) -> Option<usize> {
        let mut outside = None;
        for (id, &t) in self.tris.iter().enumerate() {
            if !self.alive[id] {
                continue;
            }
            let [a, b, c] = t;
            if c == INF {
                if outside.is_none() && orient(self.pts[a], self.pts[b], p) > 0.0 {
                    outside = Some(id);
                }
            } else if orient(self.pts[a], self.pts[b], p) >= 0.0
                && orient(self.pts[b], self.pts[c], p) >= 0.0
                && orient(self.pts[c], self.pts[a], p) >= 0.0
            {
                return Some(id);
            }
        }
        outside
    }

    fn insert(&mut self, k: usize) -> Result<(), TriangulationError> {
        let p = self.pts[k];
        let start = self.find_start(p).ok_or(TriangulationError::Numerical(k))?;

        self.stamp += 1;
        let stamp = self.stamp;
        let mut cavity = vec![start];
        self.mark[start] = stamp;
        let mut i = 0;
        while i < cavity.len() {
            let t = self.tris[cavity[i]];
            i += 1;
            for (u, v) in edges_of(t) {
                if let Some(&n) = self.edges.get(&(v, u)) {
                    if self.mark[n] != stamp && self.conflicts(self.tris[n], p) {
                        self.mark[n] = stamp;
                        cavity.push(n);
                    }
                }
            }
        }

        let mut boundary = Vec::new();
        for &id in &cavity {
            for (u, v) in edges_of(self.tris[id]) {
                let inside = self
                    .edges
                    .get(&(v, u))
                    .is_some_and(|&n| self.mark[n] == stamp);
                if !inside {
                    boundary.push((u, v));
                }
            }
        }

        let mut fresh = Vec::with_capacity(boundary.len());
        for &(u, v) in &boundary {
            let t = if u == INF {
                [v, k, INF]
            } else if v == INF {
                [k, u, INF]
            } else {
                if orient(self.pts[u], self.pts[v], p) <= 0.0 {
                    return Err(TriangulationError::Numerical(k));
                }
                [u, v, k]
            };
            fresh.push(t);
        }

        for &id in &cavity {
            self.kill(id);
        }
        for t in fresh {
            self.add(t);
        }
        Ok(())
    }

    fn finish(self) -> TriangleMesh {
        let mut triangles: Vec<[usize; 3]> = self
            .tris
            .iter()
            .zip(&self.alive)
            .filter(|(t, &alive)| alive && t[2] != INF)
            .map(|(&t, _)| rotate_min_first(t))
            .collect();
        triangles.sort_unstable();
        TriangleMesh {
            vertex_count: self.pts.len(),
            triangles,
        }
    }
}

fn edges_of(t: [usize; 3]) -> [(usize, usize); 3] {
    [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])]
}

fn rotate_min_first(t: [usize; 3]) -> [usize; 3] {
    if t[0] <= t[1] && t[0] <= t[2] {
        t
    } else if t[1] <= t[2] {
        [t[1], t[2], t[0]]
    } else {
        [t[2], t[0], t[1]]
    }
}

fn strictly_between(a: Point, b: Point, p: Point) -> bool {
    let d1 = (p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y);
    let d2 = (p.x - b.x) * (a.x - b.x) + (p.y - b.y) * (a.y - b.y);
    d1 > 0.0 && d2 > 0.0
}

/// Barycentric weights of `p` with respect to `tri`, summing to one.
pub fn barycentric(p: Point, tri: [Point; 3]) -> Result<[f64; 3], TriangulationError> {
    let [a, b, c] = tri;
    let l = (b.y - c.y) * (a.x - c.x);
    let r = (c.x - b.x) * (a.y - c.y);
    let det = l + r;
    if det.abs() <= REL_EPS * (l.abs() + r.abs()) || det.abs() <= 1e-300 {
        return Err(TriangulationError::DegenerateTriangle);
    }
    let w0 = ((b.y - c.y) * (p.x - c.x) + (c.x - b.x) * (p.y - c.y)) / det;
    let w1 = ((c.y - a.y) * (p.x - c.x) + (a.x - c.x) * (p.y - c.y)) / det;
    Ok([w0, w1, 1.0 - w0 - w1])
}

pub fn contains(tri: [Point; 3], p: Point) -> bool {
    barycentric(p, tri).is_ok_and(|w| w.iter().all(|&x| x >= -CONTAINMENT_EPS))
}

/// Index of the lowest-numbered triangle containing `p`, or `None` when
/// `p` lies outside the convex hull.
pub fn locate(mesh: &TriangleMesh, points: &[Point], p: Point) -> Option<usize> {
    (0..mesh.len()).find(|&t| contains(mesh.corners(points, t), p))
}
