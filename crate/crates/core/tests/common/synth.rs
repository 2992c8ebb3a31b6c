//! Procedural test images and landmark sets.
#![allow(dead_code)]

use morphvuln::geometry::Point;
use morphvuln::landmarks::LandmarkSet;
use morphvuln::raster::Raster;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A smooth, textured RGB image that differs per seed.
pub fn synthetic_image(seed: u64, w: u32, h: u32) -> Raster {
    let mut r = rng(seed);
    let f: [f64; 6] = std::array::from_fn(|_| r.random_range(0.02..0.3));
    let ph: [f64; 3] = std::array::from_fn(|_| r.random_range(0.0..std::f64::consts::TAU));
    let (cx, cy) = (r.random_range(0.3..0.7) * w as f64, r.random_range(0.3..0.7) * h as f64);
    let rad = r.random_range(0.15..0.35) * w.min(h) as f64;
    Raster::from_fn(w, h, |x, y| {
        let (x, y) = (x as f64, y as f64);
        let blob = if (x - cx).powi(2) + (y - cy).powi(2) < rad * rad { 0.25 } else { 0.0 };
        let c = |k: usize| {
            let v = 0.35 + 0.25 * (f[2 * k] * x + ph[k]).sin() * (f[2 * k + 1] * y).cos() + blob;
            v.clamp(0.0, 1.0) as f32
        };
        [c(0), c(1), c(2)]
    })
    .unwrap()
}

/// `n` random points inside the central part of a `w x h` frame, at least
/// two pixels apart.
pub fn synthetic_landmarks(seed: u64, n: usize, w: u32, h: u32) -> LandmarkSet {
    let mut r = rng(seed ^ 0x5eed);
    let mut pts: Vec<Point> = Vec::with_capacity(n);
    while pts.len() < n {
        let p = Point::new(
            r.random_range(0.15..0.85) * w as f64,
            r.random_range(0.15..0.85) * h as f64,
        );
        if pts.iter().all(|q| q.dist(&p) >= 2.0) {
            pts.push(p);
        }
    }
    LandmarkSet::new(pts).unwrap().with_image_size(w, h)
}

/// Random distinct points; some sets snap to a coarse grid so that
/// collinear and cocircular configurations occur.
pub fn random_point_set(r: &mut ChaCha8Rng, n: usize) -> Vec<Point> {
    let grid = r.random_bool(0.3);
    let mut pts: Vec<Point> = Vec::with_capacity(n);
    let mut seen = std::collections::HashSet::new();
    while pts.len() < n {
        let p = if grid {
            Point::new(r.random_range(0..20) as f64 * 5.0, r.random_range(0..20) as f64 * 5.0)
        } else {
            Point::new(r.random_range(0.0..1000.0), r.random_range(0.0..1000.0))
        };
        if seen.insert((p.x.to_bits(), p.y.to_bits())) {
            pts.push(p);
        }
    }
    pts
}
