//! Latent-space morphing through an external generator adapter.
//!
//! Wire format:
//! `{"op":"project","image":"<path>","steps":N}` -> `{"latent":[...],"space":"W"}` and
//! `{"op":"synthesize","latent":[...],"space":"W","out":"<path>"}` ->
//! `{"ok":true,"width":W,"height":H}`.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::adapter::{AdapterCommand, AdapterError, AdapterProcess};
use crate::landmarks::{self, AlignmentTemplate, LandmarkError};
use crate::morph::{self, GenerationManifest, LandmarkProvider, LandmarkSource, MorphError};
use crate::pool;
use crate::protocols::PairProtocol;
use crate::raster::{self, Raster, RasterError};

pub const DEFAULT_PROJECTION_STEPS: u64 = 1000;

#[derive(Debug, Error)]
pub enum LatentError {
    #[error("latent dimensions differ: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("latent spaces differ: {0:?} vs {1:?}")]
    Space(String, String),
    #[error("invalid latent vector: {0}")]
    Invalid(String),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error("invalid generator response: {0}")]
    Payload(String),
    #[error("generator declared {declared_w}x{declared_h} but wrote {actual_w}x{actual_h}")]
    SizeMismatch {
        declared_w: u32,
        declared_h: u32,
        actual_w: u32,
        actual_h: u32,
    },
    #[error("latent cache {path}: {reason}")]
    Cache { path: String, reason: String },
    #[error("generator unavailable: {0}")]
    Generator(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Landmarks(#[from] LandmarkError),
    #[error(transparent)]
    Morph(#[from] MorphError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector {
    values: Vec<f64>,
    space: String,
}

impl LatentVector {
    pub fn new(values: Vec<f64>, space: impl Into<String>) -> Result<Self, LatentError> {
        if values.is_empty() {
            return Err(LatentError::Invalid("empty vector".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(LatentError::Invalid(format!("component {i} is not finite")));
        }
        Ok(Self {
            values,
            space: space.into(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn space(&self) -> &str {
        &self.space
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    /// Reads a `{"latent":[...],"space":"..."}` payload.
    pub fn from_payload(v: &Value) -> Result<Self, LatentError> {
        let arr = v
            .get("latent")
            .and_then(Value::as_array)
            .ok_or_else(|| LatentError::Payload("missing `latent` array".into()))?;
        let space = v
            .get("space")
            .and_then(Value::as_str)
            .ok_or_else(|| LatentError::Payload("missing `space` string".into()))?;
        let mut values = Vec::with_capacity(arr.len());
        for (i, x) in arr.iter().enumerate() {
            // serde_json has no NaN literal; adapters emitting one send null or a string.
            let x = x
                .as_f64()
                .ok_or_else(|| LatentError::Invalid(format!("component {i} is not a finite number: {x}")))?;
            values.push(x);
        }
        Self::new(values, space)
    }
}

/// `alpha * wa + (1 - alpha) * wb`, componentwise.
pub fn lerp_latent(wa: &LatentVector, wb: &LatentVector, alpha: f64) -> Result<LatentVector, LatentError> {
    raster::check_alpha(alpha)?;
    if wa.dimension() != wb.dimension() {
        return Err(LatentError::Dimension(wa.dimension(), wb.dimension()));
    }
    if wa.space != wb.space {
        return Err(LatentError::Space(wa.space.clone(), wb.space.clone()));
    }
    let (ka, kb) = raster::blend_weights(alpha);
    let values = wa
        .values
        .iter()
        .zip(&wb.values)
        .map(|(&a, &b)| ka * a + kb * b)
        .collect();
    LatentVector::new(values, wa.space.clone())
}

/// Projects an (aligned) image. Returns the vector and the raw response.
pub fn project(
    adapter: &mut AdapterProcess,
    image: &Path,
    steps: u64,
    seed: Option<u64>,
) -> Result<(LatentVector, Value), LatentError> {
    let mut req = json!({"op": "project", "image": image.display().to_string(), "steps": steps});
    if let Some(seed) = seed {
        req["seed"] = json!(seed);
    }
    let resp = adapter.request(&req)?;
    Ok((LatentVector::from_payload(&resp)?, resp))
}

/// Renders `w` into a PNG at `out` and loads it back, checking the size the
/// adapter declared against the file it wrote.
pub fn synthesize(adapter: &mut AdapterProcess, w: &LatentVector, out: &Path) -> Result<Raster, LatentError> {
    let resp = adapter.request(&json!({
        "op": "synthesize",
        "latent": w.values,
        "space": w.space,
        "out": out.display().to_string(),
    }))?;
    if resp.get("ok").and_then(Value::as_bool) != Some(true) {
        return Err(LatentError::Payload(format!("synthesize did not report ok: {resp}")));
    }
    let dim = |key: &str| {
        resp.get(key)
            .and_then(Value::as_u64)
            .and_then(|v| u32::try_from(v).ok())
            .ok_or_else(|| LatentError::Payload(format!("missing or invalid `{key}`")))
    };
    let (declared_w, declared_h) = (dim("width")?, dim("height")?);
    let img = raster::load_image(out)?;
    if (img.width(), img.height()) != (declared_w, declared_h) {
        return Err(LatentError::SizeMismatch {
            declared_w,
            declared_h,
            actual_w: img.width(),
            actual_h: img.height(),
        });
    }
    Ok(img)
}

/// Projection results on disk, keyed by the SHA-256 of the projected image
/// file. Each entry is `<hash>.latent.json` holding the adapter response.
#[derive(Debug, Clone)]
pub struct LatentCache {
    dir: PathBuf,
}

impl LatentCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn key_for(image: &Path) -> Result<String, LatentError> {
        let bytes = fs::read(image).map_err(|e| LatentError::Cache {
            path: image.display().to_string(),
            reason: e.to_string(),
        })?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    pub fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.latent.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<LatentVector>, LatentError> {
        let path = self.entry_path(key);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => {
                return Err(LatentError::Cache {
                    path: path.display().to_string(),
                    reason: e.to_string(),
                })
            }
        };
        let cache_err = |reason: String| LatentError::Cache {
            path: path.display().to_string(),
            reason,
        };
        let v: Value = serde_json::from_str(&text).map_err(|e| cache_err(e.to_string()))?;
        LatentVector::from_payload(&v).map(Some).map_err(|e| cache_err(e.to_string()))
    }

    pub fn put(&self, key: &str, payload: &Value) -> Result<(), LatentError> {
        let path = self.entry_path(key);
        let io = |e: std::io::Error| LatentError::Cache {
            path: path.display().to_string(),
            reason: e.to_string(),
        };
        fs::create_dir_all(&self.dir).map_err(io)?;
        write_atomic(&path, payload.to_string().as_bytes()).map_err(io)
    }

    /// Cached projection of `image`, or a fresh one that is then stored.
    pub fn project(
        &self,
        adapter: &mut AdapterProcess,
        image: &Path,
        steps: u64,
        seed: Option<u64>,
    ) -> Result<LatentVector, LatentError> {
        let key = Self::key_for(image)?;
        if let Some(w) = self.get(&key)? {
            return Ok(w);
        }
        let (w, payload) = project(adapter, image, steps, seed)?;
        self.put(&key, &payload)?;
        Ok(w)
    }
}

// Workers may race on the same aligned image or cache entry; a rename
// keeps readers from seeing a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = tmp_sibling(path);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

fn tmp_sibling(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().to_string()).unwrap_or_default();
    let tid = format!("{:?}", std::thread::current().id());
    let tid: String = tid.chars().filter(char::is_ascii_digit).collect();
    path.with_file_name(format!(".{name}.{}.{tid}.tmp", std::process::id()))
}

/// Inputs of a latent generation run.
#[derive(Debug, Clone)]
pub struct LatentJob<'a> {
    pub pairs: &'a PairProtocol,
    pub alpha: f64,
    pub generator: &'a AdapterCommand,
    /// With a template, images are aligned (which needs landmarks) before
    /// projection; without one they are projected as found.
    pub template: Option<&'a AlignmentTemplate>,
    pub landmarks: Option<&'a LandmarkSource>,
    pub image_root: &'a Path,
    pub output_dir: &'a Path,
    pub cache_dir: Option<&'a Path>,
    pub steps: u64,
    pub seed: Option<u64>,
    pub tool: &'a str,
    pub workers: usize,
}

struct LatentWorker<'a> {
    landmarks: Option<LandmarkProvider<'a>>,
    generator: Result<AdapterProcess, String>,
}

/// Align, project, interpolate and synthesize every protocol pair. Each
/// distinct sample is projected once, however many pairs share it. Failing
/// pairs are recorded in the manifest.
pub fn generate_latent_set(job: &LatentJob<'_>) -> GenerationManifest {
    if let Err(e) = raster::check_alpha(job.alpha) {
        let failed = job.pairs.rows().iter().map(|_| Err(e.to_string())).collect();
        return GenerationManifest::from_results(job.pairs, failed);
    }
    let mut samples: Vec<&str> = Vec::new();
    let mut seen = HashMap::new();
    for r in job.pairs.rows() {
        for s in [r.sample_a.as_str(), r.sample_b.as_str()] {
            seen.entry(s).or_insert_with(|| {
                samples.push(s);
                samples.len() - 1
            });
        }
    }
    let spawn = || LatentWorker {
        landmarks: job.landmarks.map(|s| s.provider()),
        generator: job.generator.spawn().map_err(|e| e.to_string()),
    };
    let latents = pool::run_indexed(samples.len(), job.workers, spawn, |worker, i| {
        project_sample(job, worker, samples[i]).map_err(|e| format!("sample {}: {e}", samples[i]))
    });

    let names = morph::output_names(job.pairs, job.tool);
    let results = pool::run_indexed(
        job.pairs.len(),
        job.workers,
        || job.generator.spawn().map_err(|e| e.to_string()),
        |generator, i| {
            let row = &job.pairs.rows()[i];
            let wa = latents[seen[row.sample_a.as_str()]].as_ref().map_err(Clone::clone)?;
            let wb = latents[seen[row.sample_b.as_str()]].as_ref().map_err(Clone::clone)?;
            let generator = generator
                .as_mut()
                .map_err(|e| LatentError::Generator(e.clone()).to_string())?;
            let out = job.output_dir.join(&names[i]);
            lerp_latent(wa, wb, job.alpha)
                .and_then(|w| synthesize(generator, &w, &out))
                .map(|_| out)
                .map_err(|e| e.to_string())
        },
    );
    GenerationManifest::from_results(job.pairs, results)
}

fn project_sample(job: &LatentJob<'_>, worker: &mut LatentWorker<'_>, sample: &str) -> Result<LatentVector, LatentError> {
    let image = prepare(job, worker, sample)?;
    let generator = match &mut worker.generator {
        Ok(p) => p,
        Err(e) => return Err(LatentError::Generator(e.clone())),
    };
    match job.cache_dir {
        Some(dir) => LatentCache::new(dir).project(generator, &image, job.steps, job.seed),
        None => project(generator, &image, job.steps, job.seed).map(|(w, _)| w),
    }
}

/// The image file to project for one sample: the original, or its aligned
/// crop written under `<output>/aligned/`.
fn prepare(job: &LatentJob<'_>, worker: &mut LatentWorker<'_>, sample: &str) -> Result<PathBuf, LatentError> {
    let source = morph::resolve_sample_image(job.image_root, sample)?;
    let Some(template) = job.template else {
        return Ok(source);
    };
    let provider = worker.landmarks.as_mut().ok_or_else(|| {
        LatentError::Landmarks(LandmarkError::Template(
            "alignment needs a landmark source".into(),
        ))
    })?;
    let lm = provider.landmarks(sample, &source)?;
    let img = raster::load_image(&source)?;
    let (aligned, _, _) = landmarks::align_to_template(&img, &lm, template)?;

    let dir = job.output_dir.join("aligned");
    fs::create_dir_all(&dir).map_err(|e| LatentError::Cache {
        path: dir.display().to_string(),
        reason: e.to_string(),
    })?;
    let path = dir.join(format!("{}.png", morph::sanitize(sample)));
    let tmp = tmp_sibling(&path);
    raster::save_image(&aligned, &tmp)?;
    fs::rename(&tmp, &path).map_err(|e| LatentError::Cache {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    Ok(path)
}
