//! Benchmark sweeps over (model, dataset) corpora, score functions, alphas
//! and seeds, with CSV / JSON / Markdown report emission.
//!
//! Every input file is grouped by `(model_id, dataset_id)`. For each group
//! and seed the records are split once and the same partition is reused for
//! every alpha and score function, so score functions are compared on the
//! same test questions. Rows are sorted before emission, which makes output
//! bytes independent of worker count and scheduling.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::conformal::{conformalize, partition, Threshold};
use crate::domain::{check_alpha, EvalRecord, SplitConfig};
use crate::error::{Error, Result};
use crate::ingest::parse_records;
use crate::metrics::{evaluate, mean_entropy, EntropyScope};
use crate::scoring::ScoreFunction;

pub const CSV_HEADER: [&str; 13] = [
    "model_id",
    "dataset_id",
    "score_fn",
    "alpha",
    "seed",
    "n_cal",
    "n_test",
    "qhat",
    "accuracy",
    "set_size",
    "coverage",
    "mean_entropy",
    "empty_sets",
];

fn default_alphas() -> Vec<f64> {
    vec![SplitConfig::DEFAULT_ALPHA]
}

fn default_score_functions() -> Vec<ScoreFunction> {
    ScoreFunction::REPORT_DEFAULT.to_vec()
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_calibration_fraction() -> f64 {
    SplitConfig::DEFAULT_CALIBRATION_FRACTION
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("report")
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub inputs: Vec<PathBuf>,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_score_functions")]
    pub score_functions: Vec<ScoreFunction>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_calibration_fraction")]
    pub calibration_fraction: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub entropy_scope: EntropyScope,
    /// Upper bound on concurrently evaluated (corpus, seed) pairs.
    #[serde(default = "default_workers")]
    pub workers: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            alphas: default_alphas(),
            score_functions: default_score_functions(),
            seeds: default_seeds(),
            calibration_fraction: default_calibration_fraction(),
            output_dir: default_output_dir(),
            entropy_scope: EntropyScope::default(),
            workers: default_workers(),
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::config("at least one input file is required"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        if self.score_functions.is_empty() {
            return Err(Error::config("at least one score function is required"));
        }
        if self.alphas.is_empty() {
            return Err(Error::config("at least one alpha is required"));
        }
        for &alpha in &self.alphas {
            check_alpha(alpha)?;
        }
        SplitConfig::new(self.alphas[0], self.calibration_fraction, 0)?;
        if self.workers == 0 {
            return Err(Error::config("workers must be at least 1"));
        }
        Ok(())
    }

    /// Reads a JSON config. Relative `inputs` and `output_dir` resolve against
    /// the config file's directory.
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: BenchmarkConfig = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        for input in &mut cfg.inputs {
            if input.is_relative() {
                *input = base.join(&*input);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }
}

/// Metrics of one successful configuration tuple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowMetrics {
    pub n_cal: usize,
    pub n_test: usize,
    pub qhat: Threshold,
    pub accuracy: f64,
    pub set_size: f64,
    pub coverage: f64,
    pub mean_entropy: f64,
    pub empty_sets: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model_id: String,
    pub dataset_id: String,
    pub score_fn: ScoreFunction,
    pub alpha: f64,
    pub seed: u64,
    /// `Err` holds the message of a tuple that could not be evaluated.
    pub outcome: std::result::Result<RowMetrics, String>,
}

impl ReportRow {
    pub fn metrics(&self) -> Option<&RowMetrics> {
        self.outcome.as_ref().ok()
    }

    pub fn is_error(&self) -> bool {
        self.outcome.is_err()
    }

    fn sort_key(&self) -> (&str, &str, &'static str, u64, u64) {
        (
            &self.model_id,
            &self.dataset_id,
            self.score_fn.name(),
            // alphas are in (0, 1), so the bit pattern orders like the value
            self.alpha.to_bits(),
            self.seed,
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchmarkReport {
    pub rows: Vec<ReportRow>,
}

impl BenchmarkReport {
    pub fn new(mut rows: Vec<ReportRow>) -> Self {
        rows.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        Self { rows }
    }

    pub fn error_count(&self) -> usize {
        self.rows.iter().filter(|r| r.is_error()).count()
    }

    pub fn seeds(&self) -> BTreeSet<u64> {
        self.rows.iter().map(|r| r.seed).collect()
    }
}

/// Per-corpus entropy, kept alongside the report for plot data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropySummary {
    pub model_id: String,
    pub dataset_id: String,
    pub seed: u64,
    pub mean_entropy: f64,
    pub mean_entropy_bits: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOutcome {
    pub report: BenchmarkReport,
    pub entropy: Vec<EntropySummary>,
}

struct Corpus {
    model_id: String,
    dataset_id: String,
    records: Vec<EvalRecord>,
}

fn load_corpora(inputs: &[PathBuf]) -> Result<Vec<Corpus>> {
    let mut groups: BTreeMap<(String, String), (PathBuf, Vec<EvalRecord>)> = BTreeMap::new();
    for path in inputs {
        let records = parse_records(path).map_err(|e| match e {
            Error::MalformedRecord { line, reason } => Error::MalformedRecord {
                line,
                reason: format!("{}: {reason}", path.display()),
            },
            other => other,
        })?;
        if records.is_empty() {
            return Err(Error::config(format!("{} contains no records", path.display())));
        }
        let mut local: BTreeMap<(String, String), Vec<EvalRecord>> = BTreeMap::new();
        for r in records {
            local
                .entry((r.model_id.clone(), r.dataset_id.clone()))
                .or_default()
                .push(r);
        }
        for (key, recs) in local {
            if let Some((prev, _)) = groups.get(&key) {
                return Err(Error::config(format!(
                    "model {:?} on dataset {:?} appears in both {} and {}",
                    key.0,
                    key.1,
                    prev.display(),
                    path.display()
                )));
            }
            groups.insert(key, (path.clone(), recs));
        }
    }
    Ok(groups
        .into_iter()
        .map(|((model_id, dataset_id), (_, mut records))| {
            records.retain(|r| !r.multi_image);
            Corpus {
                model_id,
                dataset_id,
                records,
            }
        })
        .collect())
}

/// Evaluates every (alpha, score function) tuple of one corpus under one seed.
fn evaluate_seed(
    corpus: &Corpus,
    seed: u64,
    cfg: &BenchmarkConfig,
) -> (Vec<ReportRow>, Option<EntropySummary>) {
    let row = |score_fn, alpha, outcome| ReportRow {
        model_id: corpus.model_id.clone(),
        dataset_id: corpus.dataset_id.clone(),
        score_fn,
        alpha,
        seed,
        outcome,
    };
    let tuples = || {
        cfg.alphas
            .iter()
            .flat_map(|&a| cfg.score_functions.iter().map(move |&f| (f, a)))
    };

    let split = SplitConfig {
        alpha: cfg.alphas[0],
        calibration_fraction: cfg.calibration_fraction,
        seed,
    };
    let (calibration, test) = match partition(&corpus.records, &split) {
        Ok(parts) => parts,
        Err(e) => {
            let msg = e.to_string();
            return (tuples().map(|(f, a)| row(f, a, Err(msg.clone()))).collect(), None);
        }
    };
    let entropy_population = match cfg.entropy_scope {
        EntropyScope::AllRecords => &corpus.records,
        EntropyScope::TestSplit => &test,
    };
    let entropy = mean_entropy(entropy_population).ok().map(|(norm, bits)| EntropySummary {
        model_id: corpus.model_id.clone(),
        dataset_id: corpus.dataset_id.clone(),
        seed,
        mean_entropy: norm,
        mean_entropy_bits: bits,
    });

    let rows = tuples()
        .map(|(score_fn, alpha)| {
            let outcome = conformalize(&calibration, &test, alpha, score_fn)
                .and_then(|(th, sets)| {
                    let m = evaluate(&sets, entropy_population)?;
                    Ok(RowMetrics {
                        n_cal: calibration.len(),
                        n_test: m.n_test,
                        qhat: th.qhat,
                        accuracy: m.accuracy,
                        set_size: m.set_size,
                        coverage: m.coverage,
                        mean_entropy: m.mean_entropy,
                        empty_sets: m.empty_set_count,
                    })
                })
                .map_err(|e| e.to_string());
            row(score_fn, alpha, outcome)
        })
        .collect();
    (rows, entropy)
}

/// Runs the full sweep. Input and configuration problems abort with an
/// error; per-tuple failures become error rows.
pub fn run(cfg: &BenchmarkConfig) -> Result<BenchmarkOutcome> {
    cfg.validate()?;
    let corpora = load_corpora(&cfg.inputs)?;
    let jobs: Vec<(usize, u64)> = (0..corpora.len())
        .flat_map(|c| cfg.seeds.iter().map(move |&s| (c, s)))
        .collect();

    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::with_capacity(jobs.len()));
    let workers = cfg.workers.min(jobs.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(c, seed)) = jobs.get(i) else { break };
                let out = evaluate_seed(&corpora[c], seed, cfg);
                results.lock().expect("worker panicked").push(out);
            });
        }
    });

    let mut rows = Vec::new();
    let mut entropy = Vec::new();
    for (r, e) in results.into_inner().expect("worker panicked") {
        rows.extend(r);
        entropy.extend(e);
    }
    entropy.sort_by(|a, b| {
        (&a.model_id, &a.dataset_id, a.seed).cmp(&(&b.model_id, &b.dataset_id, b.seed))
    });
    Ok(BenchmarkOutcome {
        report: BenchmarkReport::new(rows),
        entropy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Model,
    Dataset,
    ScoreFn,
    Alpha,
    Seed,
}

impl Dimension {
    pub fn name(self) -> &'static str {
        match self {
            Dimension::Model => "model_id",
            Dimension::Dataset => "dataset_id",
            Dimension::ScoreFn => "score_fn",
            Dimension::Alpha => "alpha",
            Dimension::Seed => "seed",
        }
    }

    fn key(self, row: &ReportRow) -> String {
        match self {
            Dimension::Model => row.model_id.clone(),
            Dimension::Dataset => row.dataset_id.clone(),
            Dimension::ScoreFn => row.score_fn.name().to_string(),
            Dimension::Alpha => format_sig(row.alpha),
            Dimension::Seed => row.seed.to_string(),
        }
    }
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "model" | "model_id" => Ok(Dimension::Model),
            "dataset" | "dataset_id" => Ok(Dimension::Dataset),
            "score_fn" | "fn" | "score" => Ok(Dimension::ScoreFn),
            "alpha" => Ok(Dimension::Alpha),
            "seed" => Ok(Dimension::Seed),
            _ => Err(Error::config(format!(
                "unknown group-by dimension {s:?} (expected model, dataset, score_fn, alpha or seed)"
            ))),
        }
    }
}

/// Means of one group of successful rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub key: Vec<(Dimension, String)>,
    pub count: usize,
    pub error_count: usize,
    pub accuracy: f64,
    pub set_size: f64,
    pub coverage: f64,
    pub mean_entropy: f64,
}

/// Groups rows by `group_by` and averages each metric over the successful
/// rows of a group. An empty `group_by` yields one global row.
pub fn aggregate(report: &BenchmarkReport, group_by: &[Dimension]) -> Result<Vec<SummaryRow>> {
    if report.rows.is_empty() {
        return Err(Error::config("cannot aggregate an empty report"));
    }
    let mut groups: BTreeMap<Vec<String>, Vec<&ReportRow>> = BTreeMap::new();
    for row in &report.rows {
        let key = group_by.iter().map(|d| d.key(row)).collect();
        groups.entry(key).or_default().push(row);
    }
    Ok(groups
        .into_iter()
        .map(|(key, rows)| {
            let ok: Vec<_> = rows.iter().filter_map(|r| r.metrics()).collect();
            let mean = |f: fn(&RowMetrics) -> f64| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(|m| f(m)).sum::<f64>() / ok.len() as f64
                }
            };
            SummaryRow {
                key: group_by.iter().copied().zip(key).collect(),
                count: ok.len(),
                error_count: rows.len() - ok.len(),
                accuracy: mean(|m| m.accuracy),
                set_size: mean(|m| m.set_size),
                coverage: mean(|m| m.coverage),
                mean_entropy: mean(|m| m.mean_entropy),
            }
        })
        .collect())
}

/// Summary rows as CSV: one column per grouped dimension, then the group
/// sizes and metric means.
pub fn summary_to_csv(group_by: &[Dimension], rows: &[SummaryRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = group_by.iter().map(|d| d.name()).collect();
    header.extend(["count", "error_count", "accuracy", "set_size", "coverage", "mean_entropy"]);
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        let mut cells: Vec<String> = r.key.iter().map(|(_, v)| v.clone()).collect();
        cells.extend([
            r.count.to_string(),
            r.error_count.to_string(),
            format_sig(r.accuracy),
            format_sig(r.set_size),
            format_sig(r.coverage),
            format_sig(r.mean_entropy),
        ]);
        w.write_record(&cells).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// Fixed-width decimal with six significant digits.
pub fn format_sig(x: f64) -> String {
    const DIGITS: i32 = 6;
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return format!("{:.*}", (DIGITS - 1) as usize, 0.0);
    }
    let exponent = x.abs().log10().floor() as i32;
    let render = |exp: i32| format!("{:.*}", (DIGITS - 1 - exp).max(0) as usize, x);
    let s = render(exponent);
    // rounding may carry into a new leading digit (9.999996 -> 10.00000)
    let digits = s.trim_start_matches('-').split('.').next().unwrap_or("").trim_start_matches('0').len() as i32;
    if digits > exponent.max(0) + 1 {
        render(exponent + 1)
    } else {
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Csv, ReportFormat::Json, ReportFormat::Markdown];

    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Csv => "report.csv",
            ReportFormat::Json => "report.json",
            ReportFormat::Markdown => "report.md",
        }
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            _ => Err(Error::config(format!("unknown report format {s:?} (csv, json, md)"))),
        }
    }
}

/// Value of the `qhat` column: a number, `INCLUDE_ALL`, or `ERROR: <message>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum QhatCell {
    Value(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRow {
    model_id: String,
    dataset_id: String,
    score_fn: ScoreFunction,
    alpha: f64,
    seed: u64,
    n_cal: Option<usize>,
    n_test: Option<usize>,
    qhat: QhatCell,
    accuracy: Option<f64>,
    set_size: Option<f64>,
    coverage: Option<f64>,
    mean_entropy: Option<f64>,
    empty_sets: Option<usize>,
}

const ERROR_PREFIX: &str = "ERROR: ";

impl From<&ReportRow> for JsonRow {
    fn from(r: &ReportRow) -> Self {
        let m = r.metrics();
        JsonRow {
            model_id: r.model_id.clone(),
            dataset_id: r.dataset_id.clone(),
            score_fn: r.score_fn,
            alpha: r.alpha,
            seed: r.seed,
            n_cal: m.map(|m| m.n_cal),
            n_test: m.map(|m| m.n_test),
            qhat: match &r.outcome {
                Ok(m) => match m.qhat {
                    Threshold::Value(q) => QhatCell::Value(q),
                    Threshold::IncludeAll => QhatCell::Text(Threshold::INCLUDE_ALL.into()),
                },
                Err(msg) => QhatCell::Text(format!("{ERROR_PREFIX}{msg}")),
            },
            accuracy: m.map(|m| m.accuracy),
            set_size: m.map(|m| m.set_size),
            coverage: m.map(|m| m.coverage),
            mean_entropy: m.map(|m| m.mean_entropy),
            empty_sets: m.map(|m| m.empty_sets),
        }
    }
}

impl TryFrom<JsonRow> for ReportRow {
    type Error = Error;

    fn try_from(j: JsonRow) -> Result<Self> {
        let outcome = match j.qhat {
            QhatCell::Text(t) if t.starts_with(ERROR_PREFIX) => Err(t[ERROR_PREFIX.len()..].to_string()),
            qhat => {
                let qhat = match qhat {
                    QhatCell::Value(q) => Threshold::Value(q),
                    QhatCell::Text(t) if t == Threshold::INCLUDE_ALL => Threshold::IncludeAll,
                    QhatCell::Text(t) => return Err(Error::config(format!("unknown qhat {t:?}"))),
                };
                let missing = || Error::config(format!("row for {} / {} lacks metrics", j.model_id, j.dataset_id));
                Ok(RowMetrics {
                    n_cal: j.n_cal.ok_or_else(missing)?,
                    n_test: j.n_test.ok_or_else(missing)?,
                    qhat,
                    accuracy: j.accuracy.ok_or_else(missing)?,
                    set_size: j.set_size.ok_or_else(missing)?,
                    coverage: j.coverage.ok_or_else(missing)?,
                    mean_entropy: j.mean_entropy.ok_or_else(missing)?,
                    empty_sets: j.empty_sets.ok_or_else(missing)?,
                })
            }
        };
        Ok(ReportRow {
            model_id: j.model_id,
            dataset_id: j.dataset_id,
            score_fn: j.score_fn,
            alpha: j.alpha,
            seed: j.seed,
            outcome,
        })
    }
}

/// Canonical JSON: an array of row objects keyed like the CSV header.
pub fn to_json(report: &BenchmarkReport) -> String {
    let rows: Vec<JsonRow> = report.rows.iter().map(JsonRow::from).collect();
    let mut s = serde_json::to_string_pretty(&rows).expect("rows serialize");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> Result<BenchmarkReport> {
    let rows: Vec<JsonRow> =
        serde_json::from_str(text).map_err(|e| Error::config(format!("report JSON: {e}")))?;
    Ok(BenchmarkReport::new(
        rows.into_iter().map(ReportRow::try_from).collect::<Result<_>>()?,
    ))
}

pub fn to_csv(report: &BenchmarkReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in &report.rows {
        let mut cells = vec![
            r.model_id.clone(),
            r.dataset_id.clone(),
            r.score_fn.name().to_string(),
            format_sig(r.alpha),
            r.seed.to_string(),
        ];
        match &r.outcome {
            Ok(m) => cells.extend([
                m.n_cal.to_string(),
                m.n_test.to_string(),
                match m.qhat {
                    Threshold::Value(q) => format_sig(q),
                    Threshold::IncludeAll => Threshold::INCLUDE_ALL.to_string(),
                },
                format_sig(m.accuracy),
                format_sig(m.set_size),
                format_sig(m.coverage),
                format_sig(m.mean_entropy),
                m.empty_sets.to_string(),
            ]),
            Err(msg) => {
                cells.extend([String::new(), String::new(), format!("{ERROR_PREFIX}{msg}")]);
                cells.extend(std::iter::repeat_n(String::new(), 5));
            }
        }
        w.write_record(&cells).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

type Cell = (String, String, ScoreFunction, u64);

/// Per (model, dataset, fn, alpha) means over seeds of successful rows.
fn seed_means(report: &BenchmarkReport) -> BTreeMap<Cell, (usize, RowMetricsMean)> {
    let mut cells: BTreeMap<Cell, (usize, RowMetricsMean)> = BTreeMap::new();
    for r in &report.rows {
        let key = (r.model_id.clone(), r.dataset_id.clone(), r.score_fn, r.alpha.to_bits());
        let entry = cells.entry(key).or_default();
        if let Some(m) = r.metrics() {
            entry.0 += 1;
            entry.1.add(m);
        }
    }
    for (n, m) in cells.values_mut() {
        m.scale(*n);
    }
    cells
}

#[derive(Debug, Clone, Copy, Default)]
struct RowMetricsMean {
    accuracy: f64,
    set_size: f64,
    coverage: f64,
    mean_entropy: f64,
    empty_sets: f64,
}

impl RowMetricsMean {
    fn add(&mut self, m: &RowMetrics) {
        self.accuracy += m.accuracy;
        self.set_size += m.set_size;
        self.coverage += m.coverage;
        self.mean_entropy += m.mean_entropy;
        self.empty_sets += m.empty_sets as f64;
    }

    fn scale(&mut self, n: usize) {
        if n > 0 {
            let n = n as f64;
            self.accuracy /= n;
            self.set_size /= n;
            self.coverage /= n;
            self.mean_entropy /= n;
            self.empty_sets /= n;
        }
    }
}

/// Markdown tables with models as rows and dataset (x score function) columns.
pub fn to_markdown(report: &BenchmarkReport) -> String {
    let cells = seed_means(report);
    let models: BTreeSet<&str> = report.rows.iter().map(|r| r.model_id.as_str()).collect();
    let datasets: BTreeSet<&str> = report.rows.iter().map(|r| r.dataset_id.as_str()).collect();
    let fns: BTreeSet<ScoreFunction> = report.rows.iter().map(|r| r.score_fn).collect();
    let alphas: BTreeSet<u64> = report.rows.iter().map(|r| r.alpha.to_bits()).collect();
    let seeds = report.seeds();

    let mut md = String::from("# Conformal benchmark report\n\n");
    let seed_list = seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(", ");
    if seeds.len() == 1 {
        let _ = writeln!(md, "Seed: {seed_list} (single calibration/test split)\n");
    } else {
        let _ = writeln!(
            md,
            "Seeds: {seed_list} (multi-seed extension; every cell is a mean over seeds)\n"
        );
    }

    let lookup = |m: &str, d: &str, f: ScoreFunction, a: u64| {
        cells.get(&(m.to_string(), d.to_string(), f, a))
    };
    let fmt_cell = |c: Option<&(usize, RowMetricsMean)>, pick: fn(&RowMetricsMean) -> f64| match c {
        Some((0, _)) => "ERR".to_string(),
        Some((_, m)) => format_sig(pick(m)),
        None => "-".to_string(),
    };

    for &alpha in &alphas {
        let _ = writeln!(md, "## alpha = {}\n", format_sig(f64::from_bits(alpha)));

        // accuracy and entropy do not depend on the score function
        let first_fn = *fns.iter().next().expect("non-empty report");
        let per_dataset = |md: &mut String, title: &str, pick: fn(&RowMetricsMean) -> f64| {
            let _ = writeln!(md, "### {title}\n");
            let _ = writeln!(md, "| Model | {} |", datasets.iter().copied().collect::<Vec<_>>().join(" | "));
            let _ = writeln!(md, "|---|{}", "---|".repeat(datasets.len()));
            for m in &models {
                let row: Vec<_> = datasets
                    .iter()
                    .map(|d| fmt_cell(lookup(m, d, first_fn, alpha), pick))
                    .collect();
                let _ = writeln!(md, "| {m} | {} |", row.join(" | "));
            }
            md.push('\n');
        };
        let per_fn = |md: &mut String, title: &str, pick: fn(&RowMetricsMean) -> f64| {
            let _ = writeln!(md, "### {title}\n");
            let headers: Vec<_> = datasets
                .iter()
                .flat_map(|d| fns.iter().map(move |f| format!("{d} {f}")))
                .collect();
            let _ = writeln!(md, "| Model | {} |", headers.join(" | "));
            let _ = writeln!(md, "|---|{}", "---|".repeat(headers.len()));
            for m in &models {
                let row: Vec<_> = datasets
                    .iter()
                    .flat_map(|d| fns.iter().map(move |f| (d, *f)))
                    .map(|(d, f)| fmt_cell(lookup(m, d, f, alpha), pick))
                    .collect();
                let _ = writeln!(md, "| {m} | {} |", row.join(" | "));
            }
            md.push('\n');
        };

        per_dataset(&mut md, "Accuracy", |m| m.accuracy);
        per_fn(&mut md, "Set size", |m| m.set_size);
        per_fn(&mut md, "Coverage rate", |m| m.coverage);
        per_dataset(&mut md, "Mean entropy (normalized)", |m| m.mean_entropy);
        per_fn(&mut md, "Empty prediction sets", |m| m.empty_sets);
    }

    let errors: Vec<_> = report.rows.iter().filter(|r| r.is_error()).collect();
    if !errors.is_empty() {
        md.push_str("## Errors\n\n");
        for r in errors {
            let _ = writeln!(
                md,
                "- {} / {} / {} / alpha {} / seed {}: {}",
                r.model_id,
                r.dataset_id,
                r.score_fn,
                format_sig(r.alpha),
                r.seed,
                r.outcome.as_ref().err().map(String::as_str).unwrap_or_default()
            );
        }
        md.push('\n');
    }
    while md.ends_with("\n\n") {
        md.pop();
    }
    md
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes one report file per requested format; returns the written paths.
pub fn emit(report: &BenchmarkReport, formats: &[ReportFormat], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let formats: BTreeSet<_> = formats.iter().copied().collect();
    let mut written = Vec::new();
    for f in formats {
        let path = dir.join(f.file_name());
        let body = match f {
            ReportFormat::Csv => to_csv(report),
            ReportFormat::Json => to_json(report),
            ReportFormat::Markdown => to_markdown(report),
        };
        write_file(&path, &body)?;
        written.push(path);
    }
    Ok(written)
}

/// Accuracy against set size per (model, dataset, fn, alpha), averaged over seeds.
pub fn accuracy_vs_set_size_csv(report: &BenchmarkReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model_id", "dataset_id", "score_fn", "alpha", "accuracy", "set_size", "coverage"])
        .expect("in-memory write");
    for ((model, dataset, f, alpha), (n, m)) in seed_means(report) {
        if n == 0 {
            continue;
        }
        w.write_record([
            model,
            dataset,
            f.name().to_string(),
            format_sig(f64::from_bits(alpha)),
            format_sig(m.accuracy),
            format_sig(m.set_size),
            format_sig(m.coverage),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn entropy_csv(entropy: &[EntropySummary]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model_id", "dataset_id", "seed", "mean_entropy", "mean_entropy_bits"])
        .expect("in-memory write");
    for e in entropy {
        w.write_record([
            e.model_id.clone(),
            e.dataset_id.clone(),
            e.seed.to_string(),
            format_sig(e.mean_entropy),
            format_sig(e.mean_entropy_bits),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// Writes plot-data CSVs under `dir/plots/`.
pub fn emit_plot_data(outcome: &BenchmarkOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    let plots = dir.join("plots");
    fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
    let acc = plots.join("accuracy_vs_set_size.csv");
    write_file(&acc, &accuracy_vs_set_size_csv(&outcome.report))?;
    let ent = plots.join("entropy.csv");
    write_file(&ent, &entropy_csv(&outcome.entropy))?;
    Ok(vec![acc, ent])
}
