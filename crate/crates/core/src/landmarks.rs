//! Facial landmark sets: parsing, validation, geometric blending and
//! similarity alignment to a canonical template.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::adapter::{AdapterError, AdapterProcess};
use crate::geometry::Point;
use crate::raster::{self, Raster, RasterError};

/// Points closer than this are considered the same landmark.
pub const COINCIDENT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum LandmarkError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("expected {expected} points, found {actual}")]
    CountMismatch { expected: usize, actual: usize },
    #[error("a landmark set needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("point {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("points {0} and {1} coincide")]
    Coincident(usize, usize),
    #[error("landmark schemes differ: {0} vs {1}")]
    SchemeMismatch(Scheme, Scheme),
    #[error("alignment template: {0}")]
    Template(String),
    #[error("alignment anchors are degenerate (coincident)")]
    DegenerateAnchors,
    #[error("cannot read landmarks {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("landmark adapter failed for {image}: {source}")]
    Adapter {
        image: String,
        #[source]
        source: AdapterError,
    },
    #[error("invalid landmark payload for {image}: {reason}")]
    Payload { image: String, reason: String },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Annotation scheme, inferred from the number of points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// 68-point dlib-style annotation.
    P68,
    /// 189-point FRLL annotation.
    P189,
    Custom(usize),
}

impl Scheme {
    pub fn from_count(n: usize) -> Self {
        match n {
            68 => Scheme::P68,
            189 => Scheme::P189,
            n => Scheme::Custom(n),
        }
    }

    pub fn point_count(&self) -> usize {
        match self {
            Scheme::P68 => 68,
            Scheme::P189 => 189,
            Scheme::Custom(n) => *n,
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::P68 => write!(f, "P68"),
            Scheme::P189 => write!(f, "P189"),
            Scheme::Custom(n) => write!(f, "CUSTOM({n})"),
        }
    }
}

/// Ordered landmark coordinates in pixel units.
///
/// Points may lie slightly outside the image; the sampling clamp in the
/// warper takes care of them.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSet {
    points: Vec<Point>,
    scheme: Scheme,
    image_size: Option<(u32, u32)>,
}

impl LandmarkSet {
    pub fn new(points: Vec<Point>) -> Result<Self, LandmarkError> {
        if points.len() < 3 {
            return Err(LandmarkError::TooFewPoints(points.len()));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(LandmarkError::NonFinite(i));
        }
        check_distinct(&points)?;
        let scheme = Scheme::from_count(points.len());
        Ok(Self {
            points,
            scheme,
            image_size: None,
        })
    }

    pub fn with_image_size(mut self, width: u32, height: u32) -> Self {
        self.image_size = Some((width, height));
        self
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn image_size(&self) -> Option<(u32, u32)> {
        self.image_size
    }

    /// Requires the set to follow `scheme`.
    pub fn expect_scheme(&self, scheme: Scheme) -> Result<(), LandmarkError> {
        if self.scheme != scheme {
            return Err(LandmarkError::CountMismatch {
                expected: scheme.point_count(),
                actual: self.len(),
            });
        }
        Ok(())
    }

    /// Appends the four frame corners and four edge midpoints of a
    /// `width x height` image.
    pub fn with_border_points(&self, width: u32, height: u32) -> Result<Self, LandmarkError> {
        let mut points = self.points.clone();
        points.extend(border_points(width, height));
        let mut out = LandmarkSet::new(points)?;
        out.image_size = self.image_size;
        Ok(out)
    }

    pub fn map(&self, f: impl Fn(Point) -> Point) -> Result<Self, LandmarkError> {
        let mut out = LandmarkSet::new(self.points.iter().map(|&p| f(p)).collect())?;
        out.image_size = self.image_size;
        Ok(out)
    }
}

pub fn border_points(width: u32, height: u32) -> [Point; 8] {
    let w = width.saturating_sub(1) as f64;
    let h = height.saturating_sub(1) as f64;
    [
        Point::new(0.0, 0.0),
        Point::new(w / 2.0, 0.0),
        Point::new(w, 0.0),
        Point::new(w, h / 2.0),
        Point::new(w, h),
        Point::new(w / 2.0, h),
        Point::new(0.0, h),
        Point::new(0.0, h / 2.0),
    ]
}

fn check_distinct(points: &[Point]) -> Result<(), LandmarkError> {
    // Sweep over x so the check is not quadratic on large sets.
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| points[i].x.total_cmp(&points[j].x).then(i.cmp(&j)));
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if points[j].x - points[i].x > COINCIDENT_TOLERANCE {
                break;
            }
            if points[i].dist(&points[j]) <= COINCIDENT_TOLERANCE {
                return Err(LandmarkError::Coincident(i.min(j), i.max(j)));
            }
        }
    }
    Ok(())
}

/// Parses the landmark text format: the first non-comment line holds the
/// point count `N`, followed by `N` lines of whitespace-separated `x y`.
/// Blank lines and lines starting with `#` are ignored.
pub fn parse_points_text(content: &str) -> Result<LandmarkSet, LandmarkError> {
    let mut rows = content
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (line, header) = rows.next().ok_or(LandmarkError::Syntax {
        line: 1,
        reason: "missing point count".into(),
    })?;
    let expected: usize = header.parse().map_err(|_| LandmarkError::Syntax {
        line,
        reason: format!("point count {header:?} is not a non-negative integer"),
    })?;
    if expected < 3 {
        return Err(LandmarkError::TooFewPoints(expected));
    }

    let mut points = Vec::with_capacity(expected);
    for (line, row) in rows {
        let mut tokens = row.split_whitespace();
        let (Some(xs), Some(ys), None) = (tokens.next(), tokens.next(), tokens.next()) else {
            return Err(LandmarkError::Syntax {
                line,
                reason: format!("expected two coordinates, got {row:?}"),
            });
        };
        let coord = |s: &str| {
            s.parse::<f64>().map_err(|_| LandmarkError::Syntax {
                line,
                reason: format!("{s:?} is not a number"),
            })
        };
        points.push(Point::new(coord(xs)?, coord(ys)?));
    }
    if points.len() != expected {
        return Err(LandmarkError::CountMismatch {
            expected,
            actual: points.len(),
        });
    }
    LandmarkSet::new(points)
}

/// Canonical text rendering accepted by [`parse_points_text`]. Coordinates
/// use the shortest representation that round-trips.
pub fn to_points_text(lm: &LandmarkSet) -> String {
    let mut out = format!("{}\n", lm.len());
    for p in lm.points() {
        let _ = writeln!(out, "{} {}", p.x, p.y);
    }
    out
}

pub fn load_points_file(path: impl AsRef<Path>) -> Result<LandmarkSet, LandmarkError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| LandmarkError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_points_text(&text)
}

/// `alpha * la + (1 - alpha) * lb`, point by point.
pub fn weighted_mean_landmarks(
    la: &LandmarkSet,
    lb: &LandmarkSet,
    alpha: f64,
) -> Result<LandmarkSet, LandmarkError> {
    raster::check_alpha(alpha)?;
    if la.scheme != lb.scheme {
        return Err(LandmarkError::SchemeMismatch(la.scheme, lb.scheme));
    }
    let (wa, wb) = raster::blend_weights(alpha);
    let points = la
        .points
        .iter()
        .zip(&lb.points)
        .map(|(p, q)| Point::new(wa * p.x + wb * q.x, wa * p.y + wb * q.y))
        .collect();
    let mut out = LandmarkSet::new(points)?;
    out.image_size = la.image_size.or(lb.image_size);
    Ok(out)
}

/// One alignment anchor: the mean of a group of landmarks (a single index
/// for a plain point, several for e.g. an eye center) and where it should
/// land in the canonical frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    #[serde(default)]
    pub name: String,
    pub indices: Vec<usize>,
    pub target: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentTemplate {
    pub anchors: Vec<Anchor>,
    pub output_width: u32,
    pub output_height: u32,
}

impl AlignmentTemplate {
    pub fn validate(&self) -> Result<(), LandmarkError> {
        if self.output_width == 0 || self.output_height == 0 {
            return Err(LandmarkError::Template("output size must be positive".into()));
        }
        if self.anchors.len() < 2 {
            return Err(LandmarkError::Template("at least two anchors are required".into()));
        }
        for (i, a) in self.anchors.iter().enumerate() {
            if a.indices.is_empty() {
                return Err(LandmarkError::Template(format!("anchor {i} has no landmark indices")));
            }
            if !a.target.is_finite() {
                return Err(LandmarkError::Template(format!("anchor {i} has a non-finite target")));
            }
            for b in &self.anchors[..i] {
                let mut x = a.indices.clone();
                let mut y = b.indices.clone();
                x.sort_unstable();
                y.sort_unstable();
                if x == y {
                    return Err(LandmarkError::Template(format!("anchor {i} repeats an earlier anchor")));
                }
            }
        }
        Ok(())
    }

    fn resolve(&self, lm: &LandmarkSet) -> Result<Vec<Point>, LandmarkError> {
        self.anchors
            .iter()
            .map(|a| {
                let mut sx = 0.0;
                let mut sy = 0.0;
                for &i in &a.indices {
                    let p = lm.points.get(i).ok_or_else(|| {
                        LandmarkError::Template(format!(
                            "anchor {:?} refers to landmark {i}, but the set has {} points",
                            a.name,
                            lm.len()
                        ))
                    })?;
                    sx += p.x;
                    sy += p.y;
                }
                let n = a.indices.len() as f64;
                Ok(Point::new(sx / n, sy / n))
            })
            .collect()
    }
}

/// `p -> [a -b; b a] p + t`: rotation, uniform scale and translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub a: f64,
    pub b: f64,
    pub tx: f64,
    pub ty: f64,
}

impl SimilarityTransform {
    pub const IDENTITY: Self = Self {
        a: 1.0,
        b: 0.0,
        tx: 0.0,
        ty: 0.0,
    };

    /// Least-squares fit of `src[i] -> dst[i]`.
    pub fn fit(src: &[Point], dst: &[Point]) -> Result<Self, LandmarkError> {
        assert_eq!(src.len(), dst.len(), "fit needs corresponding point lists");
        if src.is_empty() {
            return Err(LandmarkError::DegenerateAnchors);
        }
        let n = src.len() as f64;
        let (mut sx, mut sy, mut dx, mut dy) = (0.0, 0.0, 0.0, 0.0);
        for (p, q) in src.iter().zip(dst) {
            sx += p.x;
            sy += p.y;
            dx += q.x;
            dy += q.y;
        }
        let (sx, sy, dx, dy) = (sx / n, sy / n, dx / n, dy / n);

        let (mut norm, mut dot, mut cross) = (0.0, 0.0, 0.0);
        let mut spread: f64 = 0.0;
        for (p, q) in src.iter().zip(dst) {
            let (px, py) = (p.x - sx, p.y - sy);
            let (qx, qy) = (q.x - dx, q.y - dy);
            norm += px * px + py * py;
            dot += px * qx + py * qy;
            cross += px * qy - py * qx;
            spread = spread.max(px.abs()).max(py.abs());
        }
        if spread <= COINCIDENT_TOLERANCE {
            return Err(LandmarkError::DegenerateAnchors);
        }
        let a = dot / norm;
        let b = cross / norm;
        Ok(Self {
            a,
            b,
            tx: dx - (a * sx - b * sy),
            ty: dy - (b * sx + a * sy),
        })
    }

    pub fn apply(&self, p: Point) -> Point {
        Point::new(
            self.a * p.x - self.b * p.y + self.tx,
            self.b * p.x + self.a * p.y + self.ty,
        )
    }

    pub fn scale(&self) -> f64 {
        self.a.hypot(self.b)
    }

    pub fn rotation(&self) -> f64 {
        self.b.atan2(self.a)
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.a * self.a + self.b * self.b;
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        let (a, b) = (self.a / d, -self.b / d);
        Some(Self {
            a,
            b,
            tx: -(a * self.tx - b * self.ty),
            ty: -(b * self.tx + a * self.ty),
        })
    }

    /// Sum of squared residuals of `src[i] -> dst[i]` under this transform.
    pub fn residual(&self, src: &[Point], dst: &[Point]) -> f64 {
        src.iter()
            .zip(dst)
            .map(|(p, q)| {
                let m = self.apply(*p);
                (m.x - q.x).powi(2) + (m.y - q.y).powi(2)
            })
            .sum()
    }
}

/// Maps the template anchors of `lm` onto their targets with the
/// least-squares similarity, resampling `raster` to the template size.
pub fn align_to_template(
    raster: &Raster,
    lm: &LandmarkSet,
    tpl: &AlignmentTemplate,
) -> Result<(Raster, LandmarkSet, SimilarityTransform), LandmarkError> {
    tpl.validate()?;
    let anchors = tpl.resolve(lm)?;
    let targets: Vec<Point> = tpl.anchors.iter().map(|a| a.target).collect();
    let fwd = SimilarityTransform::fit(&anchors, &targets)?;
    let inv = fwd.inverse().ok_or(LandmarkError::DegenerateAnchors)?;

    let out = Raster::from_fn(tpl.output_width, tpl.output_height, |x, y| {
        let s = inv.apply(Point::new(x as f64, y as f64));
        raster.sample_bilinear(s.x, s.y)
    })?;
    let moved = lm
        .map(|p| fwd.apply(p))?
        .with_image_size(tpl.output_width, tpl.output_height);
    Ok((out, moved, fwd))
}

/// Asks a detector adapter for the landmarks of one image.
///
/// Wire format: request `{"op":"landmarks","image":"<path>"}`, response
/// `{"points":[[x,y],...]}`.
pub fn detect_landmarks_external(
    adapter: &mut AdapterProcess,
    image_path: &Path,
    expected: Option<Scheme>,
) -> Result<LandmarkSet, LandmarkError> {
    let image = image_path.display().to_string();
    let response = adapter
        .request(&json!({"op": "landmarks", "image": image}))
        .map_err(|source| LandmarkError::Adapter {
            image: image.clone(),
            source,
        })?;
    let lm = points_from_payload(&response).map_err(|reason| LandmarkError::Payload {
        image: image.clone(),
        reason,
    })?;
    let lm = LandmarkSet::new(lm).map_err(|e| LandmarkError::Payload {
        image: image.clone(),
        reason: e.to_string(),
    })?;
    if let Some(scheme) = expected {
        lm.expect_scheme(scheme).map_err(|e| LandmarkError::Payload {
            image,
            reason: e.to_string(),
        })?;
    }
    Ok(lm)
}

fn points_from_payload(v: &Value) -> Result<Vec<Point>, String> {
    let arr = v
        .get("points")
        .and_then(Value::as_array)
        .ok_or("missing \"points\" array")?;
    arr.iter()
        .enumerate()
        .map(|(i, p)| match p.as_array().map(Vec::as_slice) {
            Some([x, y]) => match (x.as_f64(), y.as_f64()) {
                (Some(x), Some(y)) => Ok(Point::new(x, y)),
                _ => Err(format!("point {i} has non-numeric coordinates")),
            },
            _ => Err(format!("point {i} is not an [x, y] pair")),
        })
        .collect()
}
