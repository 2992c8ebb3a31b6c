//! Embedding ingestion, reference models and cosine scoring of trials.
//!
//! Scores are cosine *similarities*: higher means more alike, and a trial
//! is accepted when its score is at least the decision threshold.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::adapter::{AdapterError, AdapterProcess};
use crate::protocols::{ScenarioManifest, Trial, TrialKind};

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("embedding header must be sample_id,owner_id,v0,...,v{{d-1}}; found {0:?}")]
    Header(String),
    #[error("row {row}: expected {expected} values, found {actual}")]
    Ragged { row: usize, expected: usize, actual: usize },
    #[error("row {row}: {token:?} is not a finite number")]
    NonFinite { row: usize, token: String },
    #[error("embedding for {0} is the zero vector")]
    ZeroVector(String),
    #[error("duplicate embedding for sample {0}")]
    DuplicateSample(String),
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("cannot score an empty set of vectors")]
    Empty,
    #[error("no embedding for sample {path} (needed by {role} {id})")]
    Dangling { role: &'static str, id: String, path: String },
    #[error("trial refers to unknown {role} {id}")]
    UnknownId { role: &'static str, id: String },
    #[error("morph {morph} has scores for {count} contributors, expected 2")]
    MalformedGroup { morph: String, count: usize },
    #[error("embedding adapter failed for {path}: {source}")]
    Adapter {
        path: String,
        #[source]
        source: AdapterError,
    },
    #[error("invalid embedding payload for {path}: {reason}")]
    Payload { path: String, reason: String },
    #[error("adapter answered {got} of {expected} requests")]
    CountMismatch { expected: usize, got: usize },
    #[error("cannot write: {0}")]
    Write(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub sample_id: String,
    pub owner_id: String,
    pub vector: Vec<f64>,
}

/// A validated collection of embeddings sharing one dimension, indexed by
/// sample id.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingSet {
    dim: usize,
    records: Vec<EmbeddingRecord>,
    index: HashMap<String, usize>,
}

impl EmbeddingSet {
    pub fn new(records: Vec<EmbeddingRecord>) -> Result<Self, ScoringError> {
        let dim = records.first().map_or(0, |r| r.vector.len());
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if r.vector.len() != dim {
                return Err(ScoringError::DimensionMismatch(dim, r.vector.len()));
            }
            validate_vector(&r.sample_id, &r.vector)?;
            if index.insert(r.sample_id.clone(), i).is_some() {
                return Err(ScoringError::DuplicateSample(r.sample_id.clone()));
            }
        }
        Ok(Self { dim, records, index })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, sample_id: &str) -> Option<&EmbeddingRecord> {
        self.index.get(sample_id).map(|&i| &self.records[i])
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ScoringError> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["sample_id".to_string(), "owner_id".to_string()];
        header.extend((0..self.dim).map(|i| format!("v{i}")));
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.sample_id.clone(), r.owner_id.clone()];
            row.extend(r.vector.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn validate_vector(id: &str, v: &[f64]) -> Result<(), ScoringError> {
    if let Some(x) = v.iter().find(|x| !x.is_finite()) {
        return Err(ScoringError::NonFinite {
            row: 0,
            token: x.to_string(),
        });
    }
    if v.iter().all(|&x| x == 0.0) {
        return Err(ScoringError::ZeroVector(id.to_string()));
    }
    Ok(())
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet, ScoringError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| ScoringError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_embeddings(file)
}

/// Parses `sample_id,owner_id,v0,...,v{d-1}` rows.
pub fn parse_embeddings<R: Read>(input: R) -> Result<EmbeddingSet, ScoringError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let header = rdr.headers()?.clone();
    let header_ok = header.len() >= 3
        && &header[0] == "sample_id"
        && &header[1] == "owner_id"
        && header.iter().skip(2).enumerate().all(|(i, h)| h == format!("v{i}"));
    if !header_ok {
        return Err(ScoringError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }
    let dim = header.len() - 2;

    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() != dim + 2 {
            return Err(ScoringError::Ragged {
                row,
                expected: dim,
                actual: rec.len().saturating_sub(2),
            });
        }
        let vector = rec
            .iter()
            .skip(2)
            .map(|tok| match tok.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(ScoringError::NonFinite {
                    row,
                    token: tok.to_string(),
                }),
            })
            .collect::<Result<Vec<_>, _>>()?;
        records.push(EmbeddingRecord {
            sample_id: rec[0].to_string(),
            owner_id: rec[1].to_string(),
            vector,
        });
    }
    EmbeddingSet::new(records)
}

/// Componentwise mean of the enrollment vectors of one model.
pub fn reference_model(vectors: &[&[f64]]) -> Result<Vec<f64>, ScoringError> {
    let first = vectors.first().ok_or(ScoringError::Empty)?;
    let mut sum = vec![0.0; first.len()];
    for v in vectors {
        if v.len() != sum.len() {
            return Err(ScoringError::DimensionMismatch(sum.len(), v.len()));
        }
        for (s, x) in sum.iter_mut().zip(v.iter()) {
            *s += x;
        }
    }
    let n = vectors.len() as f64;
    Ok(sum.into_iter().map(|s| s / n).collect())
}

/// `dot(u, v) / (|u| |v|)`, clamped to `[-1, 1]`.
pub fn cosine_score(u: &[f64], v: &[f64]) -> Result<f64, ScoringError> {
    if u.len() != v.len() {
        return Err(ScoringError::DimensionMismatch(u.len(), v.len()));
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 {
        return Err(ScoringError::ZeroVector("left operand".into()));
    }
    if nv == 0.0 {
        return Err(ScoringError::ZeroVector("right operand".into()));
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// Embeds each `(image path, owner id)` through an extractor adapter.
///
/// Wire format: request `{"op":"embed","image":"<path>"}`, response
/// `{"vector":[...]}`. Records use the image path as sample id.
pub fn extract_embeddings_external(
    adapter: &mut AdapterProcess,
    items: &[(String, String)],
) -> Result<EmbeddingSet, ScoringError> {
    let mut records = Vec::with_capacity(items.len());
    for (path, owner) in items {
        let response = match adapter.request(&json!({"op": "embed", "image": path})) {
            Ok(r) => r,
            Err(AdapterError::Closed { .. }) => {
                return Err(ScoringError::CountMismatch {
                    expected: items.len(),
                    got: records.len(),
                })
            }
            Err(source) => {
                return Err(ScoringError::Adapter {
                    path: path.clone(),
                    source,
                })
            }
        };
        let vector = vector_from_payload(&response).map_err(|reason| ScoringError::Payload {
            path: path.clone(),
            reason,
        })?;
        validate_vector(path, &vector).map_err(|e| ScoringError::Payload {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        records.push(EmbeddingRecord {
            sample_id: path.clone(),
            owner_id: owner.clone(),
            vector,
        });
    }
    EmbeddingSet::new(records)
}

fn vector_from_payload(v: &Value) -> Result<Vec<f64>, String> {
    v.get("vector")
        .and_then(Value::as_array)
        .ok_or("missing \"vector\" array")?
        .iter()
        .enumerate()
        .map(|(i, x)| x.as_f64().ok_or_else(|| format!("component {i} is not a number")))
        .collect()
}

/// How several scores of one contributor against one morph are reduced to
/// a single number before the min over contributors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Most favorable sample for the attacker.
    #[default]
    Max,
    Mean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTrial {
    pub trial: Trial,
    pub score: f64,
}

/// Aggregated scores of one morph against each of its two contributors.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphGroup {
    pub morph_id: String,
    pub subjects: [(String, f64); 2],
}

impl MorphGroup {
    pub fn min_score(&self) -> f64 {
        self.subjects[0].1.min(self.subjects[1].1)
    }

    pub fn max_score(&self) -> f64 {
        self.subjects[0].1.max(self.subjects[1].1)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreSet {
    pub trials: Vec<ScoredTrial>,
    pub genuine: Vec<f64>,
    pub zero_effort: Vec<f64>,
    /// Sorted by morph id.
    pub morph_groups: Vec<MorphGroup>,
}

impl ScoreSet {
    /// Writes the `kind,model_id,probe_id,score` dump.
    pub fn write_dump<W: Write>(&self, out: W) -> Result<(), ScoringError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["kind", "model_id", "probe_id", "score"])?;
        for t in &self.trials {
            w.write_record([
                t.trial.kind.tag(),
                &t.trial.model_id,
                &t.trial.probe_id,
                &t.score.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scores every trial as the cosine between the mean of the model's
/// enrollment embeddings and the probe embedding, then builds the
/// per-morph groups.
pub fn score_trials(
    manifest: &ScenarioManifest,
    trials: &[Trial],
    embeddings: &EmbeddingSet,
    aggregation: Aggregation,
) -> Result<ScoreSet, ScoringError> {
    let mut models: HashMap<&str, Vec<f64>> = HashMap::new();
    let mut out = ScoreSet::default();
    // morph id -> contributor -> scores, in deterministic order.
    let mut groups: BTreeMap<&str, BTreeMap<&str, Vec<f64>>> = BTreeMap::new();

    for trial in trials {
        if !models.contains_key(trial.model_id.as_str()) {
            let model = manifest
                .reference(&trial.model_id)
                .ok_or_else(|| ScoringError::UnknownId {
                    role: "model",
                    id: trial.model_id.clone(),
                })?;
            let vectors = model
                .samples
                .iter()
                .map(|path| {
                    embeddings
                        .get(path)
                        .map(|r| r.vector.as_slice())
                        .ok_or_else(|| ScoringError::Dangling {
                            role: "model",
                            id: model.model_id.clone(),
                            path: path.clone(),
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            models.insert(model.model_id.as_str(), reference_model(&vectors)?);
        }
        let model = &models[trial.model_id.as_str()];

        let probe = manifest
            .probe(&trial.probe_id)
            .ok_or_else(|| ScoringError::UnknownId {
                role: "probe",
                id: trial.probe_id.clone(),
            })?;
        let probe_vec = embeddings.get(&probe.path).ok_or_else(|| ScoringError::Dangling {
            role: "probe",
            id: probe.probe_id.clone(),
            path: probe.path.clone(),
        })?;

        let score = cosine_score(model, &probe_vec.vector)?;
        match trial.kind {
            TrialKind::Genuine => out.genuine.push(score),
            TrialKind::ZeroEffort => out.zero_effort.push(score),
            TrialKind::MorphAttack => {
                let (Some(morph), Some(subject)) = (&trial.morph_id, &trial.target_subject) else {
                    return Err(ScoringError::MalformedGroup {
                        morph: trial.model_id.clone(),
                        count: 0,
                    });
                };
                groups
                    .entry(morph.as_str())
                    .or_default()
                    .entry(subject.as_str())
                    .or_default()
                    .push(score);
            }
        }
        out.trials.push(ScoredTrial {
            trial: trial.clone(),
            score,
        });
    }

    for (morph, subjects) in groups {
        if subjects.len() != 2 {
            return Err(ScoringError::MalformedGroup {
                morph: morph.to_string(),
                count: subjects.len(),
            });
        }
        let mut it = subjects
            .into_iter()
            .map(|(s, scores)| (s.to_string(), aggregate(&scores, aggregation)));
        let (a, b) = (it.next().unwrap(), it.next().unwrap());
        out.morph_groups.push(MorphGroup {
            morph_id: morph.to_string(),
            subjects: [a, b],
        });
    }
    Ok(out)
}

fn aggregate(scores: &[f64], how: Aggregation) -> f64 {
    match how {
        Aggregation::Max => scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Aggregation::Mean => scores.iter().sum::<f64>() / scores.len() as f64,
    }
}
