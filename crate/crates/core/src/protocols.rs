//! Pair protocols for morph generation and scenario manifests for
//! evaluation.
//!
//! A pair protocol is a CSV with header `subject_a,sample_a,subject_b,sample_b`
//! naming which bona fide images to morph. A scenario manifest is a CSV with
//! header `role,kind,id,subject,contributor_a,contributor_b,path`:
//!
//! * `role` is `reference` or `probe`;
//! * `kind` is `bonafide` or `morph`;
//! * `id` is the model id for references (several rows with the same id are
//!   the enrollment samples of one model) and the probe id for probes;
//! * bona fide rows carry `subject` and leave both contributor fields empty,
//!   morph rows name their two contributing subjects;
//! * `path` is the image path, which is also the key into embedding files.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PAIR_HEADER: [&str; 4] = ["subject_a", "sample_a", "subject_b", "sample_b"];
pub const MANIFEST_HEADER: [&str; 7] = [
    "role",
    "kind",
    "id",
    "subject",
    "contributor_a",
    "contributor_b",
    "path",
];

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("unexpected header {found:?}, expected {expected:?}")]
    Header { found: String, expected: String },
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error("row {row} pairs subject {subject} with itself")]
    SelfPair { row: usize, subject: String },
    #[error("row {row} duplicates row {first}")]
    DuplicateRow { row: usize, first: usize },
    #[error("duplicate probe id {0}")]
    DuplicateProbe(String),
    #[error("reference model {0} has conflicting rows")]
    ConflictingModel(String),
    #[error("morphs appear both as references and as probes")]
    MixedDirections,
    #[error("morph {0} appears on the wrong side for the requested direction")]
    WrongSide(String),
    #[error("morph {morph} names contributor {subject}, who has no bona fide entry on the other side")]
    DanglingContributor { morph: String, subject: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairRow {
    pub subject_a: String,
    pub sample_a: String,
    pub subject_b: String,
    pub sample_b: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PairProtocol {
    rows: Vec<PairRow>,
}

impl PairProtocol {
    pub fn new(rows: Vec<PairRow>) -> Result<Self, ProtocolError> {
        let mut seen: std::collections::HashMap<&PairRow, usize> = Default::default();
        for (i, r) in rows.iter().enumerate() {
            let row = i + 1;
            for (name, v) in [
                ("subject_a", &r.subject_a),
                ("sample_a", &r.sample_a),
                ("subject_b", &r.subject_b),
                ("sample_b", &r.sample_b),
            ] {
                if v.is_empty() {
                    return Err(ProtocolError::Row {
                        row,
                        reason: format!("empty {name}"),
                    });
                }
            }
            if r.subject_a == r.subject_b {
                return Err(ProtocolError::SelfPair {
                    row,
                    subject: r.subject_a.clone(),
                });
            }
            if let Some(&first) = seen.get(r) {
                return Err(ProtocolError::DuplicateRow { row, first });
            }
            seen.insert(r, row);
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[PairRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn csv_reader<R: Read>(rdr: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(rdr)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), ProtocolError> {
    let header = rdr.headers()?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(ProtocolError::Header {
            found: header.iter().collect::<Vec<_>>().join(","),
            expected: expected.join(","),
        });
    }
    Ok(())
}

fn open(path: &Path) -> Result<std::fs::File, ProtocolError> {
    std::fs::File::open(path).map_err(|source| ProtocolError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_pair_protocol(path: impl AsRef<Path>) -> Result<PairProtocol, ProtocolError> {
    parse_pair_protocol(open(path.as_ref())?)
}

pub fn parse_pair_protocol<R: Read>(input: R) -> Result<PairProtocol, ProtocolError> {
    let mut rdr = csv_reader(input);
    check_header(&mut rdr, &PAIR_HEADER)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != PAIR_HEADER.len() {
            return Err(ProtocolError::Row {
                row: i + 1,
                reason: format!("expected {} fields, found {}", PAIR_HEADER.len(), rec.len()),
            });
        }
        rows.push(PairRow {
            subject_a: rec[0].to_string(),
            sample_a: rec[1].to_string(),
            subject_b: rec[2].to_string(),
            sample_b: rec[3].to_string(),
        });
    }
    PairProtocol::new(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    MorphsAsReferences,
    MorphsAsProbes,
}

impl Direction {
    pub fn tag(&self) -> &'static str {
        match self {
            Direction::MorphsAsReferences => "references",
            Direction::MorphsAsProbes => "probes",
        }
    }
}

/// Who an image belongs to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Identity {
    BonaFide { subject: String },
    Morph { contributors: [String; 2] },
}

impl Identity {
    pub fn is_morph(&self) -> bool {
        matches!(self, Identity::Morph { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceModel {
    pub model_id: String,
    pub identity: Identity,
    /// Enrollment sample paths, in manifest order.
    pub samples: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub probe_id: String,
    pub identity: Identity,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioManifest {
    direction: Direction,
    references: Vec<ReferenceModel>,
    probes: Vec<Probe>,
}

impl ScenarioManifest {
    /// Validates and builds a manifest. When `direction` is `None` it is
    /// inferred from the side the morphs are on; a manifest without morphs
    /// then defaults to morphs-as-references.
    pub fn new(
        references: Vec<ReferenceModel>,
        probes: Vec<Probe>,
        direction: Option<Direction>,
    ) -> Result<Self, ProtocolError> {
        let mut ids = HashSet::new();
        for p in &probes {
            if !ids.insert(p.probe_id.as_str()) {
                return Err(ProtocolError::DuplicateProbe(p.probe_id.clone()));
            }
        }
        let mut models = HashSet::new();
        for m in &references {
            if !models.insert(m.model_id.as_str()) {
                return Err(ProtocolError::ConflictingModel(m.model_id.clone()));
            }
        }

        let morph_refs = references.iter().find(|m| m.identity.is_morph());
        let morph_probes = probes.iter().find(|p| p.identity.is_morph());
        let direction = match (direction, morph_refs, morph_probes) {
            (None, Some(_), Some(_)) => return Err(ProtocolError::MixedDirections),
            (None, _, Some(_)) => Direction::MorphsAsProbes,
            (None, _, None) => Direction::MorphsAsReferences,
            (Some(Direction::MorphsAsReferences), _, Some(p)) => {
                return Err(ProtocolError::WrongSide(p.probe_id.clone()))
            }
            (Some(Direction::MorphsAsProbes), Some(m), _) => {
                return Err(ProtocolError::WrongSide(m.model_id.clone()))
            }
            (Some(d), _, _) => d,
        };

        let manifest = Self {
            direction,
            references,
            probes,
        };
        manifest.check_contributors()?;
        Ok(manifest)
    }

    fn check_contributors(&self) -> Result<(), ProtocolError> {
        let subjects = |side: &mut dyn Iterator<Item = &Identity>| -> BTreeSet<String> {
            side.filter_map(|i| match i {
                Identity::BonaFide { subject } => Some(subject.clone()),
                Identity::Morph { .. } => None,
            })
            .collect()
        };
        let ref_subjects = subjects(&mut self.references.iter().map(|m| &m.identity));
        let probe_subjects = subjects(&mut self.probes.iter().map(|p| &p.identity));

        let morphs = self
            .references
            .iter()
            .map(|m| (&m.model_id, &m.identity, &probe_subjects))
            .chain(self.probes.iter().map(|p| (&p.probe_id, &p.identity, &ref_subjects)));
        for (id, identity, other_side) in morphs {
            if let Identity::Morph { contributors } = identity {
                for c in contributors {
                    if !other_side.contains(c) {
                        return Err(ProtocolError::DanglingContributor {
                            morph: id.clone(),
                            subject: c.clone(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn references(&self) -> &[ReferenceModel] {
        &self.references
    }

    pub fn probes(&self) -> &[Probe] {
        &self.probes
    }

    pub fn reference(&self, model_id: &str) -> Option<&ReferenceModel> {
        self.references.iter().find(|m| m.model_id == model_id)
    }

    pub fn probe(&self, probe_id: &str) -> Option<&Probe> {
        self.probes.iter().find(|p| p.probe_id == probe_id)
    }

    pub fn load(path: impl AsRef<Path>, direction: Option<Direction>) -> Result<Self, ProtocolError> {
        Self::parse(open(path.as_ref())?, direction)
    }

    pub fn parse<R: Read>(input: R, direction: Option<Direction>) -> Result<Self, ProtocolError> {
        let mut rdr = csv_reader(input);
        check_header(&mut rdr, &MANIFEST_HEADER)?;

        let mut references: Vec<ReferenceModel> = Vec::new();
        let mut probes = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i + 1;
            let bad = |reason: String| ProtocolError::Row { row, reason };
            if rec.len() != MANIFEST_HEADER.len() {
                return Err(bad(format!(
                    "expected {} fields, found {}",
                    MANIFEST_HEADER.len(),
                    rec.len()
                )));
            }
            let (role, kind, id, subject, ca, cb, path) =
                (&rec[0], &rec[1], &rec[2], &rec[3], &rec[4], &rec[5], &rec[6]);
            if id.is_empty() {
                return Err(bad("empty id".into()));
            }
            if path.is_empty() {
                return Err(bad("empty path".into()));
            }
            let identity = match kind {
                "bonafide" => {
                    if subject.is_empty() {
                        return Err(bad("bona fide row without subject".into()));
                    }
                    if !ca.is_empty() || !cb.is_empty() {
                        return Err(bad("bona fide row with contributors".into()));
                    }
                    Identity::BonaFide {
                        subject: subject.to_string(),
                    }
                }
                "morph" => {
                    if ca.is_empty() || cb.is_empty() {
                        return Err(bad("a morph must name exactly two contributors".into()));
                    }
                    if ca == cb {
                        return Err(bad(format!("morph contributors are both {ca}")));
                    }
                    Identity::Morph {
                        contributors: [ca.to_string(), cb.to_string()],
                    }
                }
                other => return Err(bad(format!("unknown kind {other:?}"))),
            };
            match role {
                "reference" => match references.iter_mut().find(|m| m.model_id == id) {
                    Some(m) => {
                        if m.identity != identity {
                            return Err(ProtocolError::ConflictingModel(id.to_string()));
                        }
                        m.samples.push(path.to_string());
                    }
                    None => references.push(ReferenceModel {
                        model_id: id.to_string(),
                        identity,
                        samples: vec![path.to_string()],
                    }),
                },
                "probe" => probes.push(Probe {
                    probe_id: id.to_string(),
                    identity,
                    path: path.to_string(),
                }),
                other => return Err(bad(format!("unknown role {other:?}"))),
            }
        }
        Self::new(references, probes, direction)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrialKind {
    Genuine,
    ZeroEffort,
    MorphAttack,
}

impl TrialKind {
    pub fn tag(&self) -> &'static str {
        match self {
            TrialKind::Genuine => "genuine",
            TrialKind::ZeroEffort => "zero_effort",
            TrialKind::MorphAttack => "morph_attack",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub kind: TrialKind,
    pub model_id: String,
    pub probe_id: String,
    /// Set for morph attacks: the morph's id and the contributor it is
    /// compared against.
    pub morph_id: Option<String>,
    pub target_subject: Option<String>,
}

/// Lists every comparison of the scenario, sorted by model id then probe id.
///
/// Bona fide model against bona fide probe is genuine when the subjects
/// agree and a zero-effort impostor attempt otherwise. A morph is compared
/// with every bona fide entry on the other side that belongs to one of its
/// two contributors. Other combinations are not trials.
pub fn enumerate_trials(manifest: &ScenarioManifest) -> Vec<Trial> {
    let mut models: Vec<&ReferenceModel> = manifest.references.iter().collect();
    models.sort_by(|a, b| a.model_id.cmp(&b.model_id));
    let mut probes: Vec<&Probe> = manifest.probes.iter().collect();
    probes.sort_by(|a, b| a.probe_id.cmp(&b.probe_id));

    let mut trials = Vec::new();
    for m in &models {
        for p in &probes {
            let trial = |kind, morph_id: Option<&String>, target: Option<&String>| Trial {
                kind,
                model_id: m.model_id.clone(),
                probe_id: p.probe_id.clone(),
                morph_id: morph_id.cloned(),
                target_subject: target.cloned(),
            };
            match (&m.identity, &p.identity) {
                (Identity::BonaFide { subject: s }, Identity::BonaFide { subject: t }) => {
                    let kind = if s == t {
                        TrialKind::Genuine
                    } else {
                        TrialKind::ZeroEffort
                    };
                    trials.push(trial(kind, None, None));
                }
                (Identity::Morph { contributors }, Identity::BonaFide { subject }) => {
                    if contributors.contains(subject) {
                        trials.push(trial(TrialKind::MorphAttack, Some(&m.model_id), Some(subject)));
                    }
                }
                (Identity::BonaFide { subject }, Identity::Morph { contributors }) => {
                    if contributors.contains(subject) {
                        trials.push(trial(TrialKind::MorphAttack, Some(&p.probe_id), Some(subject)));
                    }
                }
                (Identity::Morph { .. }, Identity::Morph { .. }) => {}
            }
        }
    }
    trials
}

/// Cardinalities of the kind reported per evaluation scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ScenarioCounts {
    pub bona_fide: usize,
    pub morphs: usize,
    pub genuine: usize,
    pub zero_effort: usize,
    pub morph_attacks: usize,
}

/// Bona fide and morph entries on the side the morphs occupy, plus trial
/// counts per kind.
pub fn scenario_counts(manifest: &ScenarioManifest, trials: &[Trial]) -> ScenarioCounts {
    let (bona_fide, morphs) = match manifest.direction {
        Direction::MorphsAsReferences => count_sides(manifest.references.iter().map(|m| &m.identity)),
        Direction::MorphsAsProbes => count_sides(manifest.probes.iter().map(|p| &p.identity)),
    };
    let mut by_kind: BTreeMap<TrialKind, usize> = BTreeMap::new();
    for t in trials {
        *by_kind.entry(t.kind).or_default() += 1;
    }
    ScenarioCounts {
        bona_fide,
        morphs,
        genuine: by_kind.get(&TrialKind::Genuine).copied().unwrap_or(0),
        zero_effort: by_kind.get(&TrialKind::ZeroEffort).copied().unwrap_or(0),
        morph_attacks: by_kind.get(&TrialKind::MorphAttack).copied().unwrap_or(0),
    }
}

fn count_sides<'a>(ids: impl Iterator<Item = &'a Identity>) -> (usize, usize) {
    ids.fold((0, 0), |(b, m), i| if i.is_morph() { (b, m + 1) } else { (b + 1, m) })
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "role,kind,id,subject,contributor_a,contributor_b,path\n";

    fn manifest(body: &str) -> Result<ScenarioManifest, ProtocolError> {
        ScenarioManifest::parse(format!("{HEADER}{body}").as_bytes(), None)
    }

    #[test]
    fn pair_protocol_parses_and_validates() {
        let p = parse_pair_protocol(
            "subject_a,sample_a,subject_b,sample_b\n001,001_03,002,002_03\n003,003_03,004,004_03\n".as_bytes(),
        )
        .unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.rows()[1].sample_b, "004_03");

        let e = parse_pair_protocol("subject_a,sample_a,subject_b,sample_b\n001,a,001,b\n".as_bytes());
        assert!(matches!(e, Err(ProtocolError::SelfPair { row: 1, .. })));

        let e = parse_pair_protocol("subject_a,sample_a,subject_b,sample_b\n1,a,2,b\n1,a,2,b\n".as_bytes());
        assert!(matches!(e, Err(ProtocolError::DuplicateRow { row: 2, first: 1 })));

        let e = parse_pair_protocol("a,b,c,d\n1,a,2,b\n".as_bytes());
        assert!(matches!(e, Err(ProtocolError::Header { .. })));

        let e = parse_pair_protocol("subject_a,sample_a,subject_b,sample_b\n1,a,2\n".as_bytes());
        assert!(matches!(e, Err(ProtocolError::Row { row: 1, .. })));

        assert!(parse_pair_protocol("subject_a,sample_a,subject_b,sample_b\n".as_bytes())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn two_subjects_without_morphs() {
        let m = manifest(
            "reference,bonafide,m1,s1,,,s1_ref.png\n\
             reference,bonafide,m2,s2,,,s2_ref.png\n\
             probe,bonafide,p1,s1,,,s1_probe.png\n\
             probe,bonafide,p2,s2,,,s2_probe.png\n",
        )
        .unwrap();
        let trials = enumerate_trials(&m);
        let kinds: Vec<_> = trials.iter().map(|t| t.kind).collect();
        assert_eq!(
            kinds,
            [TrialKind::Genuine, TrialKind::ZeroEffort, TrialKind::ZeroEffort, TrialKind::Genuine]
        );
    }

    #[test]
    fn morph_probe_adds_one_trial_per_contributor() {
        let m = manifest(
            "reference,bonafide,m1,s1,,,s1_ref.png\n\
             reference,bonafide,m2,s2,,,s2_ref.png\n\
             probe,bonafide,p1,s1,,,s1_probe.png\n\
             probe,bonafide,p2,s2,,,s2_probe.png\n\
             probe,morph,x12,,s1,s2,morph_s1_s2.png\n",
        )
        .unwrap();
        assert_eq!(m.direction(), Direction::MorphsAsProbes);
        let trials = enumerate_trials(&m);
        let attacks: Vec<_> = trials.iter().filter(|t| t.kind == TrialKind::MorphAttack).collect();
        assert_eq!(attacks.len(), 2);
        assert_eq!(attacks[0].target_subject.as_deref(), Some("s1"));
        assert_eq!(attacks[1].target_subject.as_deref(), Some("s2"));
        assert!(attacks.iter().all(|t| t.morph_id.as_deref() == Some("x12")));
        assert_eq!(trials.len(), 6);
    }

    #[test]
    fn reference_rows_group_into_models() {
        let m = manifest(
            "reference,bonafide,m1,s1,,,a.png\n\
             reference,bonafide,m1,s1,,,b.png\n\
             probe,bonafide,p1,s1,,,c.png\n",
        )
        .unwrap();
        assert_eq!(m.references().len(), 1);
        assert_eq!(m.references()[0].samples, ["a.png", "b.png"]);

        let e = manifest("reference,bonafide,m1,s1,,,a.png\nreference,bonafide,m1,s2,,,b.png\n");
        assert!(matches!(e, Err(ProtocolError::ConflictingModel(_))));
    }

    #[test]
    fn manifest_validation_errors() {
        assert!(matches!(
            manifest("probe,bonafide,p1,s1,,,a.png\nprobe,bonafide,p1,s1,,,b.png\n"),
            Err(ProtocolError::DuplicateProbe(_))
        ));
        assert!(matches!(
            manifest("probe,morph,x,,s1,,a.png\n"),
            Err(ProtocolError::Row { .. })
        ));
        assert!(matches!(
            manifest("probe,bonafide,p,s1,s2,,a.png\n"),
            Err(ProtocolError::Row { .. })
        ));
        assert!(matches!(
            manifest("reference,bonafide,m1,s1,,,a.png\nprobe,morph,x,,s1,s9,m.png\n"),
            Err(ProtocolError::DanglingContributor { .. })
        ));
        assert!(matches!(
            manifest(
                "reference,morph,x,,s1,s2,m.png\nreference,bonafide,m1,s1,,,a.png\n\
                 probe,morph,y,,s1,s2,n.png\nprobe,bonafide,p1,s1,,,b.png\nprobe,bonafide,p2,s2,,,c.png\n"
            ),
            Err(ProtocolError::MixedDirections)
        ));
        let e = ScenarioManifest::parse(
            format!("{HEADER}reference,bonafide,m1,s1,,,a.png\nprobe,morph,x,,s1,s1,m.png\n").as_bytes(),
            Some(Direction::MorphsAsProbes),
        );
        assert!(matches!(e, Err(ProtocolError::Row { .. })));
        let e = ScenarioManifest::parse(
            format!("{HEADER}reference,bonafide,m1,s1,,,a.png\nreference,bonafide,m2,s2,,,b.png\nprobe,morph,x,,s1,s2,m.png\n")
                .as_bytes(),
            Some(Direction::MorphsAsReferences),
        );
        assert!(matches!(e, Err(ProtocolError::WrongSide(_))));
    }
}
