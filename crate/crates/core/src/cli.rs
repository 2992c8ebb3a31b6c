//! The `morphvuln` command line: `landmarks`, `morph`, `evaluate` and
//! `report`, all driven by one JSON run configuration.
//!
//! Exit codes: 0 on success, 1 on a validation or evaluation error, 2 when
//! a generation run finished with some failed items (its manifest is still
//! written).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::adapter::AdapterCommand;
use crate::landmarks::{self, AlignmentTemplate, Scheme};
use crate::latent::{self, LatentJob, DEFAULT_PROJECTION_STEPS};
use crate::morph::{self, GenerationJob, GenerationManifest, LandmarkSource, MorphConfig};
use crate::pool;
use crate::protocols::{self, Direction, ScenarioManifest};
use crate::scoring::{self, Aggregation, ScoreSet};
use crate::vulnerability::{self, VulnerabilityReport, DEFAULT_TARGET_FMR};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

pub const METADATA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config {path}: {reason}")]
    Config { path: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("{path}: {reason}")]
    MissingFile { path: String, reason: String },
    #[error("{context}: {reason}")]
    Failed { context: String, reason: String },
    #[error("replay refused: {0}")]
    Replay(String),
}

fn failed(context: impl Into<String>, e: impl std::fmt::Display) -> CliError {
    CliError::Failed {
        context: context.into(),
        reason: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Tool {
    #[default]
    Landmark,
    Latent,
}

impl Tool {
    pub fn default_tag(&self) -> &'static str {
        match self {
            Tool::Landmark => "opencv",
            Tool::Latent => "stylegan",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DirectionChoice {
    References,
    Probes,
    #[default]
    Both,
}

impl DirectionChoice {
    fn includes(&self, d: Direction) -> bool {
        matches!(
            (self, d),
            (DirectionChoice::Both, _)
                | (DirectionChoice::References, Direction::MorphsAsReferences)
                | (DirectionChoice::Probes, Direction::MorphsAsProbes)
        )
    }
}

/// One report cell to evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSpec {
    pub dataset: String,
    pub frs: String,
    pub tool: String,
    /// Embedding CSV covering every image path of both manifests.
    pub embeddings: PathBuf,
    /// Scenario manifest with morphs on the reference side.
    #[serde(default)]
    pub references: Option<PathBuf>,
    /// Scenario manifest with morphs on the probe side.
    #[serde(default)]
    pub probes: Option<PathBuf>,
}

/// The run configuration file. Relative paths are relative to the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_root: PathBuf,
    #[serde(default)]
    pub image_root: Option<PathBuf>,
    #[serde(default)]
    pub landmark_root: Option<PathBuf>,
    #[serde(default)]
    pub pair_protocol: Option<PathBuf>,
    #[serde(default)]
    pub tool: Tool,
    /// Prefix of generated file names; defaults per tool.
    #[serde(default)]
    pub tool_tag: Option<String>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub geometry_alpha: Option<f64>,
    #[serde(default)]
    pub border_augmentation: bool,
    #[serde(default)]
    pub landmark_adapter: Option<AdapterCommand>,
    #[serde(default)]
    pub landmark_scheme: Option<Scheme>,
    #[serde(default)]
    pub generator_adapter: Option<AdapterCommand>,
    #[serde(default)]
    pub alignment_template: Option<AlignmentTemplate>,
    #[serde(default = "default_steps")]
    pub projection_steps: u64,
    #[serde(default)]
    pub latent_cache: Option<PathBuf>,
    #[serde(default = "default_target_fmr")]
    pub target_fmr: f64,
    #[serde(default)]
    pub direction: DirectionChoice,
    #[serde(default)]
    pub aggregation: Aggregation,
    #[serde(default)]
    pub evaluations: Vec<EvaluationSpec>,
    /// Report CSVs merged by `report`; defaults to `<output_root>/report.csv`.
    #[serde(default)]
    pub report_inputs: Vec<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_alpha() -> f64 {
    morph::DEFAULT_ALPHA
}

fn default_steps() -> u64 {
    DEFAULT_PROJECTION_STEPS
}

fn default_target_fmr() -> f64 {
    DEFAULT_TARGET_FMR
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let err = |reason: String| CliError::Config {
            path: path.display().to_string(),
            reason,
        };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let mut cfg = Self::parse(&text).map_err(err)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let base = if base.as_os_str().is_empty() { PathBuf::from(".") } else { base };
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_root);
        for p in [
            &mut self.image_root,
            &mut self.landmark_root,
            &mut self.pair_protocol,
            &mut self.latent_cache,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        for e in &mut self.evaluations {
            fix(&mut e.embeddings);
            for p in [&mut e.references, &mut e.probes].into_iter().flatten() {
                fix(p);
            }
        }
        self.report_inputs.iter_mut().for_each(fix);
    }

    fn apply(&mut self, o: &Overrides) {
        if let Some(t) = o.tool {
            self.tool = t;
        }
        if let Some(a) = o.alpha {
            self.alpha = a;
        }
        if let Some(t) = o.target_fmr {
            self.target_fmr = t;
        }
        if let Some(d) = o.direction {
            self.direction = d;
        }
        if let Some(w) = o.workers {
            self.workers = Some(w);
        }
        if let Some(s) = o.seed {
            self.seed = Some(s);
        }
    }

    pub fn tag(&self) -> String {
        self.tool_tag.clone().unwrap_or_else(|| self.tool.default_tag().to_string())
    }

    fn workers(&self) -> usize {
        self.workers.unwrap_or_else(pool::default_workers).max(1)
    }

    fn check_target_fmr(&self) -> Result<(), CliError> {
        if !(self.target_fmr > 0.0 && self.target_fmr < 1.0) {
            return Err(CliError::Invalid(format!(
                "target_fmr must lie strictly between 0 and 1, got {}",
                self.target_fmr
            )));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON of the (resolved) configuration.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

fn require<'a, T>(value: &'a Option<T>, key: &str, cmd: &str) -> Result<&'a T, CliError> {
    value
        .as_ref()
        .ok_or_else(|| CliError::Invalid(format!("`{key}` is required for {cmd}")))
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::MissingFile {
            path: path.display().to_string(),
            reason: "file not found".into(),
        })
    }
}

fn require_dir(path: &Path) -> Result<(), CliError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::MissingFile {
            path: path.display().to_string(),
            reason: "directory not found".into(),
        })
    }
}

/// Written next to every run's outputs as `run-<command>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub version: u32,
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub started_at: String,
    pub finished_at: String,
    pub exit_code: i32,
}

impl RunMetadata {
    pub fn file_name(command: &str) -> String {
        format!("run-{command}.json")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| CliError::Config {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

#[derive(Debug, Parser)]
#[command(name = "morphvuln", version, about = "Face morph generation and vulnerability evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect landmarks for every image under the image root.
    Landmarks(Overrides),
    /// Generate the morph set of the pair protocol.
    Morph(Overrides),
    /// Score the scenario manifests and write the vulnerability report.
    Evaluate(Overrides),
    /// Re-render the text report from report CSVs.
    Report(Overrides),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Landmarks(_) => "landmarks",
            Command::Morph(_) => "morph",
            Command::Evaluate(_) => "evaluate",
            Command::Report(_) => "report",
        }
    }

    fn overrides(&self) -> &Overrides {
        match self {
            Command::Landmarks(o) | Command::Morph(o) | Command::Evaluate(o) | Command::Report(o) => o,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON run configuration.
    #[arg(long, required_unless_present = "replay")]
    pub config: Option<PathBuf>,
    /// Re-run from a run-metadata file, after checking its config hash.
    #[arg(long, conflicts_with = "config")]
    pub replay: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub tool: Option<Tool>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long = "target-fmr")]
    pub target_fmr: Option<f64>,
    #[arg(long, value_enum)]
    pub direction: Option<DirectionChoice>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Diagnostics go to stderr.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match run(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}

pub fn run(command: &Command) -> Result<i32, CliError> {
    let o = command.overrides();
    let cfg = match (&o.config, &o.replay) {
        (_, Some(meta)) => {
            let meta = RunMetadata::load(meta)?;
            if meta.command != command.name() {
                return Err(CliError::Replay(format!(
                    "metadata records a `{}` run, not `{}`",
                    meta.command,
                    command.name()
                )));
            }
            let hash = meta.config.hash();
            if hash != meta.config_hash {
                return Err(CliError::Replay(format!(
                    "config hash {hash} does not match recorded {}",
                    meta.config_hash
                )));
            }
            meta.config
        }
        (Some(path), None) => {
            let mut cfg = RunConfig::load(path)?;
            cfg.apply(o);
            cfg
        }
        (None, None) => return Err(CliError::Invalid("--config is required".into())),
    };

    let started_at = now();
    let code = match command {
        Command::Landmarks(_) => cmd_landmarks(&cfg)?,
        Command::Morph(_) => cmd_morph(&cfg)?,
        Command::Evaluate(_) => cmd_evaluate(&cfg)?,
        Command::Report(_) => cmd_report(&cfg)?,
    };
    let meta = RunMetadata {
        version: METADATA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.name().to_string(),
        config_hash: cfg.hash(),
        config: cfg.clone(),
        started_at,
        finished_at: now(),
        exit_code: code,
    };
    let path = cfg.output_root.join(RunMetadata::file_name(command.name()));
    let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    write_file(&path, format!("{text}\n").as_bytes())?;
    Ok(code)
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| failed(dir.display().to_string(), e))?;
    }
    fs::write(path, bytes).map_err(|e| failed(path.display().to_string(), e))
}

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

fn collect_images(root: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = fs::read_dir(&dir).map_err(|e| failed(dir.display().to_string(), e))?;
        for entry in entries {
            let path = entry.map_err(|e| failed(dir.display().to_string(), e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Writes `<landmark_root>/<relative image path without extension>.txt`
/// for every image, plus `landmarks_manifest.csv` in the output root.
pub fn cmd_landmarks(cfg: &RunConfig) -> Result<i32, CliError> {
    let image_root = require(&cfg.image_root, "image_root", "landmarks")?;
    let landmark_root = require(&cfg.landmark_root, "landmark_root", "landmarks")?;
    let adapter = require(&cfg.landmark_adapter, "landmark_adapter", "landmarks")?;
    require_dir(image_root)?;

    let images = collect_images(image_root)?;
    let results = pool::run_indexed(
        images.len(),
        cfg.workers(),
        || adapter.spawn().map_err(|e| e.to_string()),
        |proc, i| -> Result<PathBuf, String> {
            let proc = proc.as_mut().map_err(|e| format!("landmark detector unavailable: {e}"))?;
            let image = &images[i];
            let lm = landmarks::detect_landmarks_external(proc, image, cfg.landmark_scheme)
                .map_err(|e| e.to_string())?;
            let rel = image.strip_prefix(image_root).unwrap_or(image).with_extension("txt");
            let out = landmark_root.join(rel);
            if let Some(dir) = out.parent() {
                fs::create_dir_all(dir).map_err(|e| e.to_string())?;
            }
            fs::write(&out, landmarks::to_points_text(&lm)).map_err(|e| e.to_string())?;
            Ok(out)
        },
    );

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut failures = 0;
    w.write_record(["image", "status", "output_path"])
        .map_err(|e| failed("landmarks manifest", e))?;
    for (image, res) in images.iter().zip(&results) {
        let (status, out) = match res {
            Ok(p) => ("ok".to_string(), p.display().to_string()),
            Err(e) => {
                failures += 1;
                eprintln!("landmarks failed for {}: {e}", image.display());
                (format!("failed: {e}"), String::new())
            }
        };
        w.write_record([image.display().to_string(), status, out])
            .map_err(|e| failed("landmarks manifest", e))?;
    }
    let bytes = w.into_inner().map_err(|e| failed("landmarks manifest", e))?;
    write_file(&cfg.output_root.join("landmarks_manifest.csv"), &bytes)?;
    Ok(if failures > 0 { EXIT_PARTIAL } else { EXIT_OK })
}

/// Generates the morph set into `<output_root>/morphs/` and writes
/// `<output_root>/morph_manifest.csv`.
pub fn cmd_morph(cfg: &RunConfig) -> Result<i32, CliError> {
    let protocol_path = require(&cfg.pair_protocol, "pair_protocol", "morph")?;
    let image_root = require(&cfg.image_root, "image_root", "morph")?;
    require_file(protocol_path)?;
    require_dir(image_root)?;
    let pairs = protocols::load_pair_protocol(protocol_path)
        .map_err(|e| failed(protocol_path.display().to_string(), e))?;

    let landmark_source = match (&cfg.landmark_root, &cfg.landmark_adapter) {
        (Some(dir), _) => Some(LandmarkSource::Directory(dir.clone())),
        (None, Some(cmd)) => Some(LandmarkSource::Detector {
            command: cmd.clone(),
            scheme: cfg.landmark_scheme,
        }),
        (None, None) => None,
    };
    let out_dir = cfg.output_root.join("morphs");
    fs::create_dir_all(&out_dir).map_err(|e| failed(out_dir.display().to_string(), e))?;
    let tag = cfg.tag();

    let manifest: GenerationManifest = match cfg.tool {
        Tool::Landmark => {
            let morph_cfg = MorphConfig {
                alpha: cfg.alpha,
                geometry_alpha: cfg.geometry_alpha,
                border_augmentation: cfg.border_augmentation,
            };
            morph_cfg.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
            let source = landmark_source.ok_or_else(|| {
                CliError::Invalid("the landmark tool needs `landmark_root` or `landmark_adapter`".into())
            })?;
            if let LandmarkSource::Directory(dir) = &source {
                require_dir(dir)?;
            }
            morph::generate_set(&GenerationJob {
                pairs: &pairs,
                config: &morph_cfg,
                landmarks: &source,
                image_root,
                output_dir: &out_dir,
                tool: &tag,
                workers: cfg.workers(),
            })
        }
        Tool::Latent => {
            crate::raster::check_alpha(cfg.alpha).map_err(|e| CliError::Invalid(e.to_string()))?;
            let generator = require(&cfg.generator_adapter, "generator_adapter", "the latent tool")?;
            if cfg.alignment_template.is_some() && landmark_source.is_none() {
                return Err(CliError::Invalid(
                    "alignment needs `landmark_root` or `landmark_adapter`".into(),
                ));
            }
            latent::generate_latent_set(&LatentJob {
                pairs: &pairs,
                alpha: cfg.alpha,
                generator,
                template: cfg.alignment_template.as_ref(),
                landmarks: landmark_source.as_ref(),
                image_root,
                output_dir: &out_dir,
                cache_dir: cfg.latent_cache.as_deref(),
                steps: cfg.projection_steps,
                seed: cfg.seed,
                tool: &tag,
                workers: cfg.workers(),
            })
        }
    };

    let mut bytes = Vec::new();
    manifest
        .write_csv(&mut bytes)
        .map_err(|e| failed("morph manifest", e))?;
    write_file(&cfg.output_root.join("morph_manifest.csv"), &bytes)?;
    for e in manifest.entries.iter().filter(|e| e.output_path.is_none()) {
        eprintln!("pair {} ({} x {}) {}", e.index, e.subject_a, e.subject_b, e.status);
    }
    Ok(if manifest.failures() > 0 { EXIT_PARTIAL } else { EXIT_OK })
}

fn score_direction(
    manifest_path: &Path,
    direction: Direction,
    embeddings: &scoring::EmbeddingSet,
    aggregation: Aggregation,
) -> Result<ScoreSet, CliError> {
    let context = manifest_path.display().to_string();
    let manifest = ScenarioManifest::load(manifest_path, Some(direction)).map_err(|e| failed(&context, e))?;
    let trials = protocols::enumerate_trials(&manifest);
    scoring::score_trials(&manifest, &trials, embeddings, aggregation).map_err(|e| failed(&context, e))
}

/// Scores every configured evaluation and writes `report.txt`,
/// `report.csv` and one `scores_<dataset>_<frs>_<tool>_<direction>.csv`
/// dump per scored direction.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<i32, CliError> {
    cfg.check_target_fmr()?;
    if cfg.evaluations.is_empty() {
        return Err(CliError::Invalid("no evaluations configured".into()));
    }
    for e in &cfg.evaluations {
        require_file(&e.embeddings)?;
        let mut any = false;
        for (d, path) in [
            (Direction::MorphsAsReferences, &e.references),
            (Direction::MorphsAsProbes, &e.probes),
        ] {
            if let (true, Some(path)) = (cfg.direction.includes(d), path) {
                require_file(path)?;
                any = true;
            }
        }
        if !any {
            return Err(CliError::Invalid(format!(
                "evaluation {}/{}/{} has no manifest for the requested direction",
                e.dataset, e.frs, e.tool
            )));
        }
    }

    let mut report = VulnerabilityReport {
        target_fmr: cfg.target_fmr,
        cells: Vec::new(),
    };
    for e in &cfg.evaluations {
        let embeddings =
            scoring::load_embeddings(&e.embeddings).map_err(|err| failed(e.embeddings.display().to_string(), err))?;
        let mut sets: [Option<ScoreSet>; 2] = [None, None];
        for (slot, d, path) in [
            (0, Direction::MorphsAsReferences, &e.references),
            (1, Direction::MorphsAsProbes, &e.probes),
        ] {
            let Some(path) = path.as_ref().filter(|_| cfg.direction.includes(d)) else {
                continue;
            };
            let scores = score_direction(path, d, &embeddings, cfg.aggregation)?;
            let mut dump = Vec::new();
            scores.write_dump(&mut dump).map_err(|err| failed("score dump", err))?;
            let name = format!(
                "scores_{}_{}_{}_{}.csv",
                morph::sanitize(&e.dataset),
                morph::sanitize(&e.frs),
                morph::sanitize(&e.tool),
                d.tag()
            );
            write_file(&cfg.output_root.join(name), &dump)?;
            sets[slot] = Some(scores);
        }
        let cell = vulnerability::evaluate(
            &e.dataset,
            &e.frs,
            &e.tool,
            sets[0].as_ref(),
            sets[1].as_ref(),
            cfg.target_fmr,
        )
        .map_err(|err| failed(format!("{}/{}/{}", e.dataset, e.frs, e.tool), err))?;
        report.cells.push(cell);
    }
    write_reports(cfg, &report)?;
    Ok(EXIT_OK)
}

fn write_reports(cfg: &RunConfig, report: &VulnerabilityReport) -> Result<(), CliError> {
    write_file(
        &cfg.output_root.join("report.txt"),
        vulnerability::render_report(report).as_bytes(),
    )?;
    let mut csv = Vec::new();
    vulnerability::write_report_csv(report, &mut csv).map_err(|e| failed("report CSV", e))?;
    write_file(&cfg.output_root.join("report.csv"), &csv)
}

/// Merges report CSVs and renders `<output_root>/report.txt` from them.
pub fn cmd_report(cfg: &RunConfig) -> Result<i32, CliError> {
    cfg.check_target_fmr()?;
    let inputs = if cfg.report_inputs.is_empty() {
        vec![cfg.output_root.join("report.csv")]
    } else {
        cfg.report_inputs.clone()
    };
    let mut report = VulnerabilityReport {
        target_fmr: cfg.target_fmr,
        cells: Vec::new(),
    };
    for path in &inputs {
        require_file(path)?;
        let file = fs::File::open(path).map_err(|e| failed(path.display().to_string(), e))?;
        let cells = vulnerability::read_report_csv(file).map_err(|e| failed(path.display().to_string(), e))?;
        report.cells.extend(cells);
    }
    write_file(
        &cfg.output_root.join("report.txt"),
        vulnerability::render_report(&report).as_bytes(),
    )?;
    Ok(EXIT_OK)
}
