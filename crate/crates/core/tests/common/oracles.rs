//! Independent reference computations used by the integration and
//! acceptance tests. Nothing here calls into the library's algorithms.
#![allow(dead_code)]

use std::collections::HashMap;

use morphvuln::geometry::Point;

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Andrew's monotone chain; keeps only strict corners.
pub fn convex_hull(points: &[Point]) -> Vec<(f64, f64)> {
    let mut p: Vec<(f64, f64)> = points.iter().map(|q| (q.x, q.y)).collect();
    p.sort_by(|a, b| a.partial_cmp(b).unwrap());
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &q in &p {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], q) <= 0.0 {
            lower.pop();
        }
        lower.push(q);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &q in p.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], q) <= 0.0 {
            upper.pop();
        }
        upper.push(q);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

pub fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    let mut s = 0.0;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        s += a.0 * b.1 - b.0 * a.1;
    }
    s / 2.0
}

/// Signed circumcircle test with a relative margin: true when `d` lies
/// clearly inside the circle through the counter-clockwise `a, b, c`.
fn strictly_inside_circumcircle(a: Point, b: Point, c: Point, d: Point, margin: f64) -> bool {
    let (adx, ady) = (a.x - d.x, a.y - d.y);
    let (bdx, bdy) = (b.x - d.x, b.y - d.y);
    let (cdx, cdy) = (c.x - d.x, c.y - d.y);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    let det = adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
    let scale = (adx.abs() + ady.abs()) * (bdx.abs() + bdy.abs()) * (cd + bd + ad);
    det > margin * scale.max(f64::MIN_POSITIVE)
}

/// Checks a triangulation of `points` given as index triples. Returns a
/// description of the first violated property.
pub fn check_delaunay(points: &[Point], tris: &[[usize; 3]]) -> Result<(), String> {
    let n = points.len();
    // Positive area.
    for (t, tri) in tris.iter().enumerate() {
        if tri.iter().any(|&i| i >= n) {
            return Err(format!("triangle {t} has an out-of-range vertex"));
        }
        let [a, b, c] = tri.map(|i| (points[i].x, points[i].y));
        if cross(a, b, c) <= 0.0 {
            return Err(format!("triangle {t} {tri:?} is not counter-clockwise with positive area"));
        }
    }
    // Edge sharing: each directed edge once, each undirected edge at most twice.
    let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
    for (t, tri) in tris.iter().enumerate() {
        for k in 0..3 {
            let e = (tri[k], tri[(k + 1) % 3]);
            if let Some(prev) = directed.insert(e, t) {
                return Err(format!("directed edge {e:?} in triangles {prev} and {t}"));
            }
        }
    }
    let hull = convex_hull(points);
    let on_hull_line = |p: Point, q: Point| {
        (0..hull.len()).any(|i| {
            let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
            let span = ((b.0 - a.0).abs() + (b.1 - a.1).abs()).max(1.0);
            let tol = 1e-9 * span * span;
            cross(a, b, (p.x, p.y)).abs() <= tol && cross(a, b, (q.x, q.y)).abs() <= tol
        })
    };
    let mut boundary = 0;
    for &(i, j) in directed.keys() {
        if !directed.contains_key(&(j, i)) {
            boundary += 1;
            if !on_hull_line(points[i], points[j]) {
                return Err(format!("unshared edge ({i}, {j}) is not on the convex hull"));
            }
        }
    }
    // Hull tiling: total area equals hull area, every point is used, and
    // the Euler count holds.
    let total: f64 = tris
        .iter()
        .map(|tri| {
            let [a, b, c] = tri.map(|i| (points[i].x, points[i].y));
            cross(a, b, c) / 2.0
        })
        .sum();
    let hull_area = polygon_area(&hull);
    if (total - hull_area).abs() > 1e-9 * hull_area.abs().max(1.0) {
        return Err(format!("triangles cover {total}, hull area is {hull_area}"));
    }
    let mut used = vec![false; n];
    for tri in tris {
        for &i in tri {
            used[i] = true;
        }
    }
    if let Some(i) = used.iter().position(|u| !u) {
        return Err(format!("point {i} is not a triangle vertex"));
    }
    if tris.len() != 2 * n - boundary - 2 {
        return Err(format!(
            "{} triangles, expected 2n - b - 2 = {}",
            tris.len(),
            2 * n - boundary - 2
        ));
    }
    // Empty circumcircle, exhaustively.
    for (t, tri) in tris.iter().enumerate() {
        let [a, b, c] = tri.map(|i| points[i]);
        for (k, &d) in points.iter().enumerate() {
            if tri.contains(&k) {
                continue;
            }
            if strictly_inside_circumcircle(a, b, c, d, 1e-9) {
                return Err(format!("point {k} lies inside the circumcircle of triangle {t}"));
            }
        }
    }
    Ok(())
}

pub fn count_at_or_above(scores: &[f64], t: f64) -> usize {
    let mut n = 0;
    for &s in scores {
        if s >= t {
            n += 1;
        }
    }
    n
}

pub fn fmr_loop(zero_effort: &[f64], t: f64) -> f64 {
    count_at_or_above(zero_effort, t) as f64 / zero_effort.len() as f64
}

pub fn fnmr_loop(genuine: &[f64], t: f64) -> f64 {
    let mut n = 0;
    for &s in genuine {
        if s < t {
            n += 1;
        }
    }
    n as f64 / genuine.len() as f64
}

/// Morphs given as two per-contributor score lists each; a morph succeeds
/// when every contributor has at least one accepted attempt.
pub fn mmpmr_loop(morphs: &[[Vec<f64>; 2]], t: f64) -> f64 {
    let mut hits = 0;
    for m in morphs {
        let mut ok = true;
        for side in m {
            let mut any = false;
            for &s in side {
                if s >= t {
                    any = true;
                }
            }
            ok &= any;
        }
        if ok {
            hits += 1;
        }
    }
    hits as f64 / morphs.len() as f64
}

/// Smallest candidate threshold (an observed score or the value just above
/// the maximum) with FMR at most `target`, by evaluating every candidate.
pub fn threshold_sweep(zero_effort: &[f64], target: f64) -> f64 {
    let max = zero_effort.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut best = max.next_up();
    if zero_effort.len() <= 3000 {
        for &c in zero_effort {
            if c < best && fmr_loop(zero_effort, c) <= target {
                best = c;
            }
        }
        return best;
    }
    // Large sets: same sweep, counting with a descending pass instead of a
    // full rescan per candidate.
    let mut sorted = zero_effort.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let n = sorted.len() as f64;
    let mut i = 0;
    while i < sorted.len() {
        let c = sorted[i];
        let mut j = i;
        while j < sorted.len() && sorted[j] == c {
            j += 1;
        }
        if j as f64 / n <= target {
            best = c;
        }
        i = j;
    }
    best
}
