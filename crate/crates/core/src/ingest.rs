//! Line-delimited JSON record files, dataset profiles, option padding and
//! corpus validation.
//!
//! Each line of a record file is one JSON object:
//!
//! ```text
//! {"record_id":"q1","dataset_id":"AI2D","model_id":"m","logprobs":{"A":-0.1,"B":-2.4},
//!  "true_label":"A","predicted_label":"A","multi_image":false}
//! ```
//!
//! `multi_image` is optional and defaults to `false`. Letters are upper-cased
//! on parse.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{EvalRecord, OptionLabel};
use crate::error::{Error, Result};

/// Log-probability gap between the least likely real option and a filler.
pub const FILLER_LOG_GAP: f64 = 13.815_510_557_964_274; // ln(1e6)

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetProfile {
    pub dataset_id: String,
    pub first_option: OptionLabel,
    pub last_option: OptionLabel,
    pub expected_count: Option<usize>,
}

/// The six built-in evaluation sets: name, answer-letter range and
/// question count after preprocessing.
pub const BUILTIN_PROFILES: [(&str, char, usize); 6] = [
    ("AI2D", 'F', 3090),
    ("ScienceQA", 'E', 2020),
    ("MathVision", 'F', 1530),
    ("WorldMedQAV", 'F', 1140),
    ("MMMU", 'E', 794),
    ("MMMU-Pro", 'J', 1210),
];

impl DatasetProfile {
    pub fn builtin_all() -> Vec<DatasetProfile> {
        BUILTIN_PROFILES
            .iter()
            .map(|(name, last, count)| DatasetProfile {
                dataset_id: (*name).to_string(),
                first_option: OptionLabel::A,
                last_option: OptionLabel::new(*last).expect("builtin ranges end in A..J"),
                expected_count: Some(*count),
            })
            .collect()
    }

    /// Looks up a built-in profile by name (case-insensitive), or accepts a
    /// bare letter range such as `A-E` with no expected count.
    pub fn lookup(name: &str) -> Result<DatasetProfile> {
        if let Some(p) = Self::builtin_all()
            .into_iter()
            .find(|p| p.dataset_id.eq_ignore_ascii_case(name))
        {
            return Ok(p);
        }
        if let Some((a, b)) = name.split_once('-') {
            if let (Ok(first), Ok(last)) = (a.trim().parse::<OptionLabel>(), b.trim().parse::<OptionLabel>()) {
                if first < last {
                    return Ok(DatasetProfile {
                        dataset_id: format!("{first}-{last}"),
                        first_option: first,
                        last_option: last,
                        expected_count: None,
                    });
                }
            }
        }
        let known: Vec<_> = BUILTIN_PROFILES.iter().map(|p| p.0).collect();
        Err(Error::config(format!(
            "unknown dataset profile {name:?}; expected one of {} or a letter range like A-E",
            known.join(", ")
        )))
    }

    pub fn options(&self) -> impl Iterator<Item = OptionLabel> {
        let (first, last) = (self.first_option, self.last_option);
        OptionLabel::all().filter(move |l| *l >= first && *l <= last)
    }

    pub fn width(&self) -> usize {
        self.last_option.index() - self.first_option.index() + 1
    }

    pub fn contains(&self, l: OptionLabel) -> bool {
        l >= self.first_option && l <= self.last_option
    }
}

#[derive(Deserialize)]
struct RecordLine {
    record_id: String,
    dataset_id: String,
    model_id: String,
    logprobs: BTreeMap<String, f64>,
    true_label: String,
    predicted_label: String,
    #[serde(default)]
    multi_image: bool,
}

impl RecordLine {
    fn into_record(self, line: usize) -> Result<EvalRecord> {
        let at = |e: Error| match e {
            Error::MalformedRecord { reason, .. } => Error::malformed(Some(line), reason),
            other => other,
        };
        let mut logprobs = BTreeMap::new();
        for (key, value) in self.logprobs {
            let l: OptionLabel = key.parse().map_err(at)?;
            if logprobs.insert(l, value).is_some() {
                return Err(Error::malformed(Some(line), format!("option {l} appears twice")));
            }
        }
        let record = EvalRecord {
            record_id: self.record_id,
            dataset_id: self.dataset_id,
            model_id: self.model_id,
            logprobs,
            true_label: self.true_label.parse().map_err(at)?,
            predicted_label: self.predicted_label.parse().map_err(at)?,
            multi_image: self.multi_image,
        };
        record.validate().map_err(at)?;
        Ok(record)
    }
}

/// Parses one record line; `line` is the 1-based line number used in errors.
pub fn parse_line(text: &str, line: usize) -> Result<EvalRecord> {
    let raw: RecordLine = serde_json::from_str(text)
        .map_err(|e| Error::malformed(Some(line), e.to_string()))?;
    raw.into_record(line)
}

/// Streams records from a reader, one JSON object per line. Blank lines are
/// skipped and CRLF endings are accepted.
pub fn parse_reader(reader: impl BufRead) -> Result<Vec<EvalRecord>> {
    let mut records = Vec::new();
    let mut seen: HashSet<(String, String, String)> = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let text = line.map_err(|e| Error::malformed(Some(line_no), e.to_string()))?;
        let text = text.trim_end_matches('\r');
        if text.trim().is_empty() {
            continue;
        }
        let record = parse_line(text, line_no)?;
        let key = (
            record.dataset_id.clone(),
            record.model_id.clone(),
            record.record_id.clone(),
        );
        if !seen.insert(key) {
            return Err(Error::DuplicateRecord {
                record_id: record.record_id,
                model_id: record.model_id,
                dataset_id: record.dataset_id,
                line: line_no,
            });
        }
        records.push(record);
    }
    Ok(records)
}

pub fn parse_records(path: impl AsRef<Path>) -> Result<Vec<EvalRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_reader(BufReader::new(file))
}

pub fn write_records<'a>(
    records: impl IntoIterator<Item = &'a EvalRecord>,
    mut out: impl Write,
) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn to_jsonl(records: &[EvalRecord]) -> String {
    let mut buf = Vec::new();
    write_records(records, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// Fills the record up to the profile's full option range.
///
/// Missing letters inside the range get a filler score of
/// `min(logprobs) - ln(1e6) - ln(m)`, where `m` is the number of fillers, so
/// the fillers together carry at most a millionth of the least likely real
/// option's mass. Existing options keep their scores and order.
pub fn pad_options(record: &EvalRecord, profile: &DatasetProfile) -> Result<EvalRecord> {
    if let Some(outside) = record.logprobs.keys().find(|l| !profile.contains(**l)) {
        return Err(Error::ProfileViolation {
            record_id: record.record_id.clone(),
            profile: profile.dataset_id.clone(),
            reason: format!(
                "option {outside} is outside {}-{}",
                profile.first_option, profile.last_option
            ),
        });
    }
    let missing: Vec<_> = profile
        .options()
        .filter(|l| !record.logprobs.contains_key(l))
        .collect();
    if missing.is_empty() {
        return Ok(record.clone());
    }
    let min = record
        .logprobs
        .values()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let filler = min - FILLER_LOG_GAP - (missing.len() as f64).ln();
    let mut padded = record.clone();
    padded.logprobs.extend(missing.into_iter().map(|l| (l, filler)));
    Ok(padded)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RangeViolation {
    pub record_id: String,
    pub model_id: String,
    pub letters: Vec<OptionLabel>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CountMismatch {
    pub model_id: String,
    pub expected: usize,
    pub actual: usize,
}

/// Outcome of checking a corpus against a dataset profile.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub profile: String,
    pub total_records: usize,
    /// Records kept after multi-image exclusion, per model.
    pub accepted_by_model: BTreeMap<String, usize>,
    pub count_mismatches: Vec<CountMismatch>,
    pub range_violations: Vec<RangeViolation>,
    pub multi_image_excluded: Vec<String>,
    /// Ground-truth letter frequencies over accepted records.
    pub true_label_histogram: BTreeMap<OptionLabel, usize>,
}

impl ValidationReport {
    pub fn violation_count(&self) -> usize {
        self.count_mismatches.len() + self.range_violations.len()
    }

    pub fn is_clean(&self) -> bool {
        self.violation_count() == 0
    }
}

/// Checks counts and option ranges. Expected counts apply per model.
pub fn validate_corpus(records: &[EvalRecord], profile: &DatasetProfile) -> ValidationReport {
    let mut report = ValidationReport {
        profile: profile.dataset_id.clone(),
        total_records: records.len(),
        true_label_histogram: profile.options().map(|l| (l, 0)).collect(),
        ..Default::default()
    };
    for r in records {
        if r.multi_image {
            report.multi_image_excluded.push(r.record_id.clone());
            continue;
        }
        *report.accepted_by_model.entry(r.model_id.clone()).or_default() += 1;
        let outside: Vec<_> = r
            .logprobs
            .keys()
            .copied()
            .filter(|l| !profile.contains(*l))
            .collect();
        if outside.is_empty() {
            *report.true_label_histogram.entry(r.true_label).or_default() += 1;
        } else {
            report.range_violations.push(RangeViolation {
                record_id: r.record_id.clone(),
                model_id: r.model_id.clone(),
                letters: outside,
            });
        }
    }
    if let Some(expected) = profile.expected_count {
        report.count_mismatches = report
            .accepted_by_model
            .iter()
            .filter(|(_, n)| **n != expected)
            .map(|(model, n)| CountMismatch {
                model_id: model.clone(),
                expected,
                actual: *n,
            })
            .collect();
    }
    report
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "profile: {}", self.profile)?;
        writeln!(f, "records: {}", self.total_records)?;
        for (model, n) in &self.accepted_by_model {
            writeln!(f, "accepted[{model}]: {n}")?;
        }
        writeln!(f, "multi-image excluded: {}", self.multi_image_excluded.len())?;
        for id in &self.multi_image_excluded {
            writeln!(f, "  excluded {id}")?;
        }
        writeln!(f, "count mismatches: {}", self.count_mismatches.len())?;
        for m in &self.count_mismatches {
            writeln!(f, "  {}: expected {}, found {}", m.model_id, m.expected, m.actual)?;
        }
        writeln!(f, "range violations: {}", self.range_violations.len())?;
        for v in &self.range_violations {
            let letters: String = v.letters.iter().map(|l| l.letter()).collect();
            writeln!(f, "  {} ({}): options {letters} outside profile", v.record_id, v.model_id)?;
        }
        write!(f, "true-label histogram:")?;
        for (l, n) in &self.true_label_histogram {
            write!(f, " {l}={n}")?;
        }
        writeln!(f)
    }
}
