//! FMR / FNMR / MMPMR, threshold selection at a target FMR, and the
//! vulnerability report.
//!
//! Acceptance is `score >= threshold` in every metric. MMPMR counts a morph
//! as a successful attack when the smaller of its two per-contributor
//! scores is accepted.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scoring::{MorphGroup, ScoreSet};

pub const DEFAULT_TARGET_FMR: f64 = 0.001;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("{0} scores are empty")]
    Empty(&'static str),
    #[error("target FMR {0} must lie strictly between 0 and 1")]
    TargetRange(f64),
    #[error("non-finite score in {0}")]
    NonFinite(&'static str),
    #[error("morph group {0} is malformed")]
    MalformedGroup(String),
    #[error("malformed report CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("report CSV row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error("cannot write report: {0}")]
    Io(#[from] std::io::Error),
}

fn nonempty<'a>(scores: &'a [f64], what: &'static str) -> Result<&'a [f64], MetricError> {
    if scores.is_empty() {
        return Err(MetricError::Empty(what));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite(what));
    }
    Ok(scores)
}

/// Fraction of zero-effort impostor scores accepted at `t`.
pub fn fmr(zero_effort: &[f64], t: f64) -> Result<f64, MetricError> {
    let s = nonempty(zero_effort, "zero-effort")?;
    Ok(s.iter().filter(|&&x| x >= t).count() as f64 / s.len() as f64)
}

/// Fraction of genuine scores rejected at `t`.
pub fn fnmr(genuine: &[f64], t: f64) -> Result<f64, MetricError> {
    let s = nonempty(genuine, "genuine")?;
    Ok(s.iter().filter(|&&x| x < t).count() as f64 / s.len() as f64)
}

/// Smallest threshold, among the observed scores and one value just above
/// the maximum, whose FMR does not exceed `target`.
///
/// Because FMR only changes at observed scores, every observed-score
/// threshold below the returned one has FMR above `target`.
pub fn threshold_at_fmr(zero_effort: &[f64], target: f64) -> Result<f64, MetricError> {
    if !(target > 0.0 && target < 1.0) {
        return Err(MetricError::TargetRange(target));
    }
    let s = nonempty(zero_effort, "zero-effort")?;
    let mut sorted = s.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut i = 0;
    while i < n {
        // Scores at or above sorted[i] are exactly sorted[i..].
        let rate = (n - i) as f64 / n as f64;
        if rate <= target {
            return Ok(sorted[i]);
        }
        let v = sorted[i];
        while i < n && sorted[i] == v {
            i += 1;
        }
    }
    Ok(sorted[n - 1].next_up())
}

/// Fraction of morphs whose weaker contributor score is accepted at `t`.
pub fn mmpmr(groups: &[MorphGroup], t: f64) -> Result<f64, MetricError> {
    rate_over_groups(groups, t, MorphGroup::min_score)
}

/// Fraction of morphs accepted for at least one contributor; an upper
/// bound on [`mmpmr`].
pub fn any_contributor_rate(groups: &[MorphGroup], t: f64) -> Result<f64, MetricError> {
    rate_over_groups(groups, t, MorphGroup::max_score)
}

fn rate_over_groups(groups: &[MorphGroup], t: f64, f: fn(&MorphGroup) -> f64) -> Result<f64, MetricError> {
    if groups.is_empty() {
        return Err(MetricError::Empty("morph"));
    }
    for g in groups {
        if g.subjects[0].0 == g.subjects[1].0 || g.subjects.iter().any(|(_, s)| !s.is_finite()) {
            return Err(MetricError::MalformedGroup(g.morph_id.clone()));
        }
    }
    Ok(groups.iter().filter(|g| f(g) >= t).count() as f64 / groups.len() as f64)
}

/// Metrics of one scenario direction at its own operating threshold.
/// Rates are percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionResult {
    pub threshold: f64,
    pub mmpmr: f64,
    pub fmr: f64,
    pub fnmr: f64,
    pub genuine: usize,
    pub zero_effort: usize,
    pub morphs: usize,
}

pub fn evaluate_direction(scores: &ScoreSet, target_fmr: f64) -> Result<DirectionResult, MetricError> {
    let t = threshold_at_fmr(&scores.zero_effort, target_fmr)?;
    Ok(DirectionResult {
        threshold: t,
        mmpmr: 100.0 * mmpmr(&scores.morph_groups, t)?,
        fmr: 100.0 * fmr(&scores.zero_effort, t)?,
        fnmr: 100.0 * fnmr(&scores.genuine, t)?,
        genuine: scores.genuine.len(),
        zero_effort: scores.zero_effort.len(),
        morphs: scores.morph_groups.len(),
    })
}

/// One cell of the report: a dataset, a recognizer and a morphing tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub dataset: String,
    pub frs: String,
    pub tool: String,
    pub references: Option<DirectionResult>,
    pub probes: Option<DirectionResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VulnerabilityReport {
    pub target_fmr: f64,
    pub cells: Vec<ReportCell>,
}

/// Evaluates both scenario directions of one cell independently: each
/// direction's threshold comes from its own zero-effort scores.
pub fn evaluate(
    dataset: &str,
    frs: &str,
    tool: &str,
    references: Option<&ScoreSet>,
    probes: Option<&ScoreSet>,
    target_fmr: f64,
) -> Result<ReportCell, MetricError> {
    if !(target_fmr > 0.0 && target_fmr < 1.0) {
        return Err(MetricError::TargetRange(target_fmr));
    }
    Ok(ReportCell {
        dataset: dataset.to_string(),
        frs: frs.to_string(),
        tool: tool.to_string(),
        references: references.map(|s| evaluate_direction(s, target_fmr)).transpose()?,
        probes: probes.map(|s| evaluate_direction(s, target_fmr)).transpose()?,
    })
}

/// Rounds half away from zero to one decimal.
pub fn format_percent(v: f64) -> String {
    let r = (v * 10.0).round() / 10.0;
    // Avoid printing "-0.0".
    let r = if r == 0.0 { 0.0 } else { r };
    format!("{r:.1}")
}

fn caption(target_fmr: f64) -> String {
    format!(
        "MMPMR @ FMR = {}% (morphs as references | morphs as probes) [%]",
        100.0 * target_fmr
    )
}

/// Renders the table: one row per (dataset, recognizer), one column per
/// tool, in order of first appearance. Each cell reads `R | P`; missing
/// combinations read `N/A`.
pub fn render_report(report: &VulnerabilityReport) -> String {
    let mut rows: Vec<(&str, &str)> = Vec::new();
    let mut tools: Vec<&str> = Vec::new();
    let mut cells: BTreeMap<(&str, &str, &str), &ReportCell> = BTreeMap::new();
    for c in &report.cells {
        let row = (c.dataset.as_str(), c.frs.as_str());
        if !rows.contains(&row) {
            rows.push(row);
        }
        if !tools.contains(&c.tool.as_str()) {
            tools.push(&c.tool);
        }
        cells.insert((&c.dataset, &c.frs, &c.tool), c);
    }

    let side = |r: &Option<DirectionResult>| r.map_or("N/A".to_string(), |d| format_percent(d.mmpmr));
    let mut table: Vec<Vec<String>> = Vec::with_capacity(rows.len() + 1);
    let mut header = vec!["Dataset".to_string(), "FRS".to_string()];
    header.extend(tools.iter().map(|t| t.to_string()));
    table.push(header);
    for &(dataset, frs) in &rows {
        let mut line = vec![dataset.to_string(), frs.to_string()];
        for &tool in &tools {
            line.push(match cells.get(&(dataset, frs, tool)) {
                Some(c) if c.references.is_some() || c.probes.is_some() => {
                    format!("{} | {}", side(&c.references), side(&c.probes))
                }
                _ => "N/A".to_string(),
            });
        }
        table.push(line);
    }

    let ncols = table[0].len();
    let widths: Vec<usize> = (0..ncols)
        .map(|i| table.iter().map(|r| r[i].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = caption(report.target_fmr);
    out.push('\n');
    for r in &table {
        let mut line = String::new();
        for (i, cell) in r.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            let _ = write!(line, "{cell:<width$}", width = widths[i]);
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

pub const REPORT_CSV_HEADER: [&str; 11] = [
    "dataset",
    "frs",
    "tool",
    "mmpmr_ref",
    "mmpmr_probe",
    "threshold_ref",
    "threshold_probe",
    "fmr_ref",
    "fmr_probe",
    "fnmr_ref",
    "fnmr_probe",
];

/// Writes the machine-readable report. Rates are percentages in full
/// precision; fields of a missing direction are left empty.
pub fn write_report_csv<W: Write>(report: &VulnerabilityReport, out: W) -> Result<(), MetricError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_CSV_HEADER)?;
    let f = |d: &Option<DirectionResult>, g: fn(&DirectionResult) -> f64| d.as_ref().map_or(String::new(), |d| g(d).to_string());
    for c in &report.cells {
        w.write_record([
            c.dataset.clone(),
            c.frs.clone(),
            c.tool.clone(),
            f(&c.references, |d| d.mmpmr),
            f(&c.probes, |d| d.mmpmr),
            f(&c.references, |d| d.threshold),
            f(&c.probes, |d| d.threshold),
            f(&c.references, |d| d.fmr),
            f(&c.probes, |d| d.fmr),
            f(&c.references, |d| d.fnmr),
            f(&c.probes, |d| d.fnmr),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads cells back from a report CSV. Trial counts are not part of the
/// CSV and come back as zero.
pub fn read_report_csv<R: Read>(input: R) -> Result<Vec<ReportCell>, MetricError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(REPORT_CSV_HEADER.iter().copied()) {
        return Err(MetricError::Row {
            row: 0,
            reason: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut cells = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let num = |k: usize| -> Result<Option<f64>, MetricError> {
            let s = &rec[k];
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>().map(Some).map_err(|_| MetricError::Row {
                row,
                reason: format!("{s:?} in column {} is not a number", REPORT_CSV_HEADER[k]),
            })
        };
        let side = |m: usize, t: usize, f: usize, n: usize| -> Result<Option<DirectionResult>, MetricError> {
            match (num(m)?, num(t)?, num(f)?, num(n)?) {
                (Some(mmpmr), Some(threshold), Some(fmr), Some(fnmr)) => Ok(Some(DirectionResult {
                    threshold,
                    mmpmr,
                    fmr,
                    fnmr,
                    genuine: 0,
                    zero_effort: 0,
                    morphs: 0,
                })),
                (None, None, None, None) => Ok(None),
                _ => Err(MetricError::Row {
                    row,
                    reason: "partially filled direction".into(),
                }),
            }
        };
        cells.push(ReportCell {
            dataset: rec[0].to_string(),
            frs: rec[1].to_string(),
            tool: rec[2].to_string(),
            references: side(3, 5, 7, 9)?,
            probes: side(4, 6, 8, 10)?,
        });
    }
    Ok(cells)
}
