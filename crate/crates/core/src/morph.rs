//! Landmark-based morphing: per-triangle affine warps onto the blended
//! geometry, cross-dissolve inside the landmark hull and a plain average of
//! the unwarped sources outside it.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapter::{AdapterCommand, AdapterError, AdapterProcess};
use crate::geometry::{orient, Point};
use crate::landmarks::{self, LandmarkError, LandmarkSet, Scheme};
use crate::pool;
use crate::protocols::{PairProtocol, PairRow};
use crate::raster::{self, Raster, RasterError};
use crate::triangulation::{self, TriangleMesh, TriangulationError};

pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Error)]
pub enum MorphError {
    #[error("degenerate triangle")]
    DegenerateTriangle,
    #[error("landmark count mismatch: {0} vs {1}")]
    LandmarkCount(usize, usize),
    #[error("mesh was built over {mesh} points but {landmarks} landmarks were given")]
    MeshMismatch { mesh: usize, landmarks: usize },
    #[error("source images differ in size: {0}x{1} vs {2}x{3}")]
    SizeMismatch(u32, u32, u32, u32),
    #[error("no image for sample {sample} under {root}")]
    MissingImage { sample: String, root: String },
    #[error("no landmark file for sample {sample} under {root}")]
    MissingLandmarks { sample: String, root: String },
    #[error("landmark detector unavailable: {0}")]
    Detector(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Landmarks(#[from] LandmarkError),
    #[error(transparent)]
    Triangulation(#[from] TriangulationError),
    #[error("cannot write manifest: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot write manifest: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorphConfig {
    /// Weight of the first source in the pixel blend.
    pub alpha: f64,
    /// Weight of the first source's geometry; defaults to `alpha`.
    #[serde(default)]
    pub geometry_alpha: Option<f64>,
    /// Adds frame corners and edge midpoints to both landmark sets so the
    /// whole image is warped.
    #[serde(default)]
    pub border_augmentation: bool,
}

impl Default for MorphConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            geometry_alpha: None,
            border_augmentation: false,
        }
    }
}

impl MorphConfig {
    pub fn geometry_weight(&self) -> f64 {
        self.geometry_alpha.unwrap_or(self.alpha)
    }

    pub fn validate(&self) -> Result<(), MorphError> {
        raster::check_alpha(self.alpha)?;
        raster::check_alpha(self.geometry_weight())?;
        Ok(())
    }
}

/// A 2x3 affine map `(x, y) -> (m[0] x + m[1] y + m[2], m[3] x + m[4] y + m[5])`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine(pub [f64; 6]);

impl Affine {
    pub const IDENTITY: Affine = Affine([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);

    pub fn apply(&self, p: Point) -> Point {
        let m = &self.0;
        Point::new(m[0] * p.x + m[1] * p.y + m[2], m[3] * p.x + m[4] * p.y + m[5])
    }
}

/// The affine map taking each `dst` vertex to the matching `src` vertex,
/// i.e. the inverse warp used to pull destination pixels from the source.
pub fn affine_from_triangles(src: [Point; 3], dst: [Point; 3]) -> Result<Affine, MorphError> {
    if orient(src[0], src[1], src[2]) == 0.0 {
        return Err(MorphError::DegenerateTriangle);
    }
    pull_back_affine(src, dst)
}

/// Like [`affine_from_triangles`] but only the destination triangle must be
/// proper. A contributor's landmarks can make a mesh triangle collapse or
/// fold in source space; the pull-back map is still well defined.
fn pull_back_affine(src: [Point; 3], dst: [Point; 3]) -> Result<Affine, MorphError> {
    if orient(dst[0], dst[1], dst[2]) == 0.0 {
        return Err(MorphError::DegenerateTriangle);
    }
    let [d0, d1, d2] = dst;
    let [s0, s1, s2] = src;
    let (e1x, e1y) = (d1.x - d0.x, d1.y - d0.y);
    let (e2x, e2y) = (d2.x - d0.x, d2.y - d0.y);
    let det = e1x * e2y - e2x * e1y;
    let (f1x, f1y) = (s1.x - s0.x, s1.y - s0.y);
    let (f2x, f2y) = (s2.x - s0.x, s2.y - s0.y);

    let m0 = (e2y * f1x - e1y * f2x) / det;
    let m1 = (e1x * f2x - e2x * f1x) / det;
    let m3 = (e2y * f1y - e1y * f2y) / det;
    let m4 = (e1x * f2y - e2x * f1y) / det;
    Ok(Affine([
        m0,
        m1,
        s0.x - m0 * d0.x - m1 * d0.y,
        m3,
        m4,
        s0.y - m3 * d0.x - m4 * d0.y,
    ]))
}

/// Which triangle produced each pixel of a warp, if any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageMask {
    width: u32,
    height: u32,
    owner: Vec<u32>,
}

impl CoverageMask {
    const NONE: u32 = u32::MAX;

    fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            owner: vec![Self::NONE; width as usize * height as usize],
        }
    }

    pub fn triangle_at(&self, x: u32, y: u32) -> Option<usize> {
        let t = self.owner[y as usize * self.width as usize + x as usize];
        (t != Self::NONE).then_some(t as usize)
    }

    pub fn is_covered(&self, x: u32, y: u32) -> bool {
        self.triangle_at(x, y).is_some()
    }

    pub fn covered_count(&self) -> usize {
        self.owner.iter().filter(|&&t| t != Self::NONE).count()
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }
}

/// Piecewise-affine inverse warp of `src` from `src_lm` onto `dst_lm`.
///
/// Every pixel center inside the hull of `dst_lm` is assigned to the
/// lowest-index mesh triangle containing it, mapped back through that
/// triangle's affine and sampled bilinearly. Pixels outside the hull keep
/// the source value and are reported as uncovered.
pub fn warp_piecewise(
    src: &Raster,
    src_lm: &LandmarkSet,
    dst_lm: &LandmarkSet,
    mesh: &TriangleMesh,
) -> Result<(Raster, CoverageMask), MorphError> {
    if src_lm.len() != dst_lm.len() {
        return Err(MorphError::LandmarkCount(src_lm.len(), dst_lm.len()));
    }
    if mesh.vertex_count() != dst_lm.len() {
        return Err(MorphError::MeshMismatch {
            mesh: mesh.vertex_count(),
            landmarks: dst_lm.len(),
        });
    }
    let (w, h) = (src.width(), src.height());
    let mut mask = CoverageMask::new(w, h);
    let mut data = src.data().to_vec();

    for t in 0..mesh.len() {
        let dst_tri = mesh.corners(dst_lm.points(), t);
        let src_tri = mesh.corners(src_lm.points(), t);
        let map = pull_back_affine(src_tri, dst_tri)?;

        let Some((x0, x1, y0, y1)) = pixel_bounds(&dst_tri, w, h) else {
            continue;
        };
        for y in y0..=y1 {
            for x in x0..=x1 {
                let idx = y as usize * w as usize + x as usize;
                if mask.owner[idx] != CoverageMask::NONE {
                    continue;
                }
                let p = Point::new(x as f64, y as f64);
                if !triangulation::contains(dst_tri, p) {
                    continue;
                }
                mask.owner[idx] = t as u32;
                let s = map.apply(p);
                let px = src.sample_bilinear(s.x, s.y);
                data[idx * 3..idx * 3 + 3].copy_from_slice(&px);
            }
        }
    }
    Ok((Raster::new(w, h, data)?, mask))
}

fn pixel_bounds(tri: &[Point; 3], w: u32, h: u32) -> Option<(u32, u32, u32, u32)> {
    let min_x = tri.iter().map(|p| p.x).fold(f64::INFINITY, f64::min).floor().max(0.0);
    let max_x = tri.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max).ceil();
    let min_y = tri.iter().map(|p| p.y).fold(f64::INFINITY, f64::min).floor().max(0.0);
    let max_y = tri.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max).ceil();
    let max_x = max_x.min((w - 1) as f64);
    let max_y = max_y.min((h - 1) as f64);
    if min_x > max_x || min_y > max_y {
        return None;
    }
    Some((min_x as u32, max_x as u32, min_y as u32, max_y as u32))
}

/// Everything [`morph_pair`] computes, for inspection.
#[derive(Debug, Clone)]
pub struct MorphOutput {
    pub raster: Raster,
    pub mask: CoverageMask,
    pub landmarks: LandmarkSet,
    pub mesh: TriangleMesh,
}

pub fn morph_pair(
    a: &Raster,
    la: &LandmarkSet,
    b: &Raster,
    lb: &LandmarkSet,
    cfg: &MorphConfig,
) -> Result<Raster, MorphError> {
    morph_pair_detailed(a, la, b, lb, cfg).map(|o| o.raster)
}

pub fn morph_pair_detailed(
    a: &Raster,
    la: &LandmarkSet,
    b: &Raster,
    lb: &LandmarkSet,
    cfg: &MorphConfig,
) -> Result<MorphOutput, MorphError> {
    cfg.validate()?;
    if !a.same_size(b) {
        return Err(MorphError::SizeMismatch(a.width(), a.height(), b.width(), b.height()));
    }
    let (la, lb) = if cfg.border_augmentation {
        (
            la.with_border_points(a.width(), a.height())?,
            lb.with_border_points(b.width(), b.height())?,
        )
    } else {
        (la.clone(), lb.clone())
    };

    let mean = landmarks::weighted_mean_landmarks(&la, &lb, cfg.geometry_weight())?;
    let mesh = triangulation::delaunay(mean.points())?;
    let (wa, mask) = warp_piecewise(a, &la, &mean, &mesh)?;
    let (wb, _) = warp_piecewise(b, &lb, &mean, &mesh)?;

    let (ka, kb) = raster::blend_weights(cfg.alpha);
    let (w, h) = (a.width(), a.height());
    let mut data = Vec::with_capacity(a.data().len());
    for y in 0..h {
        for x in 0..w {
            let (pa, pb) = if mask.is_covered(x, y) {
                (wa.pixel(x, y), wb.pixel(x, y))
            } else {
                (a.pixel(x, y), b.pixel(x, y))
            };
            for c in 0..3 {
                data.push(raster::blend_sample(pa[c], pb[c], ka, kb));
            }
        }
    }
    Ok(MorphOutput {
        raster: Raster::new(w, h, data)?,
        mask,
        landmarks: mean,
        mesh,
    })
}

/// Where per-sample landmarks come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandmarkSource {
    /// `<dir>/<sample>.txt` (or `<dir>/<sample stem>.txt`) in the landmark
    /// text format.
    Directory(PathBuf),
    /// A detector adapter; one process per worker.
    Detector {
        command: AdapterCommand,
        #[serde(default)]
        scheme: Option<Scheme>,
    },
}

pub(crate) enum LandmarkProvider<'a> {
    Directory(&'a Path),
    Detector(Result<AdapterProcess, String>, Option<Scheme>),
}

impl LandmarkSource {
    pub(crate) fn provider(&self) -> LandmarkProvider<'_> {
        match self {
            LandmarkSource::Directory(dir) => LandmarkProvider::Directory(dir),
            LandmarkSource::Detector { command, scheme } => LandmarkProvider::Detector(
                command.spawn().map_err(|e: AdapterError| e.to_string()),
                *scheme,
            ),
        }
    }
}

impl LandmarkProvider<'_> {
    pub(crate) fn landmarks(&mut self, sample: &str, image: &Path) -> Result<LandmarkSet, MorphError> {
        match self {
            LandmarkProvider::Directory(dir) => {
                let path = landmark_file(dir, sample).ok_or_else(|| MorphError::MissingLandmarks {
                    sample: sample.to_string(),
                    root: dir.display().to_string(),
                })?;
                Ok(landmarks::load_points_file(path)?)
            }
            LandmarkProvider::Detector(Ok(p), scheme) => {
                Ok(landmarks::detect_landmarks_external(p, image, *scheme)?)
            }
            LandmarkProvider::Detector(Err(e), _) => Err(MorphError::Detector(e.clone())),
        }
    }
}

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// Finds the image of a sample: `<root>/<sample>` as given, or with a PNG or
/// JPEG extension appended.
pub fn resolve_sample_image(root: &Path, sample: &str) -> Result<PathBuf, MorphError> {
    let direct = root.join(sample);
    if direct.is_file() {
        return Ok(direct);
    }
    for ext in IMAGE_EXTENSIONS {
        let p = root.join(format!("{sample}.{ext}"));
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(MorphError::MissingImage {
        sample: sample.to_string(),
        root: root.display().to_string(),
    })
}

fn landmark_file(dir: &Path, sample: &str) -> Option<PathBuf> {
    let direct = dir.join(format!("{sample}.txt"));
    if direct.is_file() {
        return Some(direct);
    }
    let stem = Path::new(sample).file_stem()?.to_string_lossy().to_string();
    let p = dir.join(format!("{stem}.txt"));
    p.is_file().then_some(p)
}

pub(crate) fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c == '/' || c == '\\' || c == ':' { '_' } else { c })
        .collect()
}

/// Output file names `<tool>_<subject_a>_<subject_b>.png`. When a subject
/// pair occurs more than once in the protocol, those rows are named by
/// sample ids instead so that no two outputs collide.
pub fn output_names(pairs: &PairProtocol, tool: &str) -> Vec<String> {
    let base = |r: &PairRow| format!("{tool}_{}_{}.png", sanitize(&r.subject_a), sanitize(&r.subject_b));
    let mut counts = std::collections::HashMap::new();
    for r in pairs.rows() {
        *counts.entry(base(r)).or_insert(0usize) += 1;
    }
    pairs
        .rows()
        .iter()
        .map(|r| {
            let name = base(r);
            if counts[&name] > 1 {
                format!("{tool}_{}_{}.png", sanitize(&r.sample_a), sanitize(&r.sample_b))
            } else {
                name
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PairStatus {
    Ok,
    Failed(String),
}

impl fmt::Display for PairStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PairStatus::Ok => write!(f, "ok"),
            PairStatus::Failed(why) => write!(f, "failed: {why}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub index: usize,
    pub subject_a: String,
    pub subject_b: String,
    pub status: PairStatus,
    /// Set only for successful pairs.
    pub output_path: Option<PathBuf>,
}

/// Outcome of a generation run, in protocol order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GenerationManifest {
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_HEADER: [&str; 5] = ["index", "subject_a", "subject_b", "status", "output_path"];

impl GenerationManifest {
    pub fn failures(&self) -> usize {
        self.entries.iter().filter(|e| e.status != PairStatus::Ok).count()
    }

    pub fn successes(&self) -> usize {
        self.entries.len() - self.failures()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), MorphError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(MANIFEST_HEADER)?;
        for e in &self.entries {
            w.write_record([
                e.index.to_string(),
                e.subject_a.clone(),
                e.subject_b.clone(),
                e.status.to_string(),
                e.output_path
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub(crate) fn from_results(pairs: &PairProtocol, results: Vec<Result<PathBuf, String>>) -> Self {
        let entries = pairs
            .rows()
            .iter()
            .zip(results)
            .enumerate()
            .map(|(index, (row, res))| {
                let (status, output_path) = match res {
                    Ok(p) => (PairStatus::Ok, Some(p)),
                    Err(e) => (PairStatus::Failed(e), None),
                };
                ManifestEntry {
                    index,
                    subject_a: row.subject_a.clone(),
                    subject_b: row.subject_b.clone(),
                    status,
                    output_path,
                }
            })
            .collect();
        Self { entries }
    }
}

/// Inputs of a landmark-based generation run.
#[derive(Debug, Clone)]
pub struct GenerationJob<'a> {
    pub pairs: &'a PairProtocol,
    pub config: &'a MorphConfig,
    pub landmarks: &'a LandmarkSource,
    pub image_root: &'a Path,
    pub output_dir: &'a Path,
    /// Prefix of output file names, e.g. `opencv`.
    pub tool: &'a str,
    pub workers: usize,
}

/// Morphs every protocol pair into `output_dir`. A failing pair is recorded
/// in the manifest and does not stop the run.
pub fn generate_set(job: &GenerationJob<'_>) -> GenerationManifest {
    let names = output_names(job.pairs, job.tool);
    let results = pool::run_indexed(
        job.pairs.len(),
        job.workers,
        || job.landmarks.provider(),
        |provider, i| {
            let row = &job.pairs.rows()[i];
            let out = job.output_dir.join(&names[i]);
            morph_one(job, provider, row, &out)
                .map(|_| out)
                .map_err(|e| e.to_string())
        },
    );
    GenerationManifest::from_results(job.pairs, results)
}

fn morph_one(
    job: &GenerationJob<'_>,
    provider: &mut LandmarkProvider<'_>,
    row: &PairRow,
    out: &Path,
) -> Result<(), MorphError> {
    let path_a = resolve_sample_image(job.image_root, &row.sample_a)?;
    let path_b = resolve_sample_image(job.image_root, &row.sample_b)?;
    let a = raster::load_image(&path_a)?;
    let b = raster::load_image(&path_b)?;
    let la = provider.landmarks(&row.sample_a, &path_a)?;
    let lb = provider.landmarks(&row.sample_b, &path_b)?;
    let m = morph_pair(&a, &la, &b, &lb, job.config)?;
    raster::save_image(&m, out)?;
    Ok(())
}
