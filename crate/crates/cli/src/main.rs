use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use confbench_client::{collect_corpus, EndpointConfig, PromptTemplate, Question, RetryPolicy, DEFAULT_API_KEY_ENV};
use confbench_core::bench::{self, BenchmarkConfig, Dimension, ReportFormat};
use confbench_core::ingest::{self, DatasetProfile};
use confbench_core::synth::{self, SynthConfig};
use confbench_core::{EntropyScope, ScoreFunction};

/// Conformal uncertainty benchmarking for multiple-choice model outputs.
#[derive(Parser)]
#[command(name = "confbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a record file against a dataset profile.
    Validate(ValidateArgs),
    /// Run a benchmark sweep and write reports.
    Run(RunArgs),
    /// Query a chat-completions endpoint and write a record file.
    Collect(CollectArgs),
    /// Generate a seeded synthetic record file.
    Synth(SynthArgs),
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    input: PathBuf,
    /// Built-in profile name (AI2D, ScienceQA, ...) or a letter range such as A-D.
    #[arg(long)]
    dataset: String,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config with BenchmarkConfig field names. Excludes the sweep flags.
    #[arg(long, conflicts_with_all = ["input", "alpha", "score_fn", "seed", "calibration_fraction", "entropy_scope"])]
    config: Option<PathBuf>,
    /// Record file; repeatable.
    #[arg(long, required_unless_present = "config")]
    input: Vec<PathBuf>,
    /// Miscoverage rate; repeatable. Defaults to 0.1.
    #[arg(long)]
    alpha: Vec<f64>,
    /// LAC, APS, MARGIN_LABEL (alias MS) or MARGIN_PAPER; repeatable.
    #[arg(long, value_parser = parse_score_fn)]
    score_fn: Vec<ScoreFunction>,
    /// Split seed; repeatable. Defaults to 0.
    #[arg(long)]
    seed: Vec<u64>,
    #[arg(long)]
    calibration_fraction: Option<f64>,
    /// all_records (default) or test_split.
    #[arg(long, value_parser = parse_entropy_scope)]
    entropy_scope: Option<EntropyScope>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Comma-separated subset of csv,json,md.
    #[arg(long, value_delimiter = ',', default_value = "csv,json,md", value_parser = parse_format)]
    formats: Vec<ReportFormat>,
    /// Also write summary.csv grouped by these dimensions (model, dataset, score_fn, alpha, seed).
    #[arg(long, value_delimiter = ',', value_parser = parse_dimension)]
    group_by: Option<Vec<Dimension>>,
}

#[derive(Args)]
struct CollectArgs {
    /// Question file, one JSON object per line.
    #[arg(long)]
    questions: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Endpoint base URL; `/chat/completions` is appended.
    #[arg(long)]
    base_url: String,
    #[arg(long)]
    model: String,
    /// Environment variable holding the API key.
    #[arg(long, default_value = DEFAULT_API_KEY_ENV)]
    api_key_env: String,
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    #[arg(long, default_value_t = RetryPolicy::default().max_attempts)]
    max_attempts: u32,
    /// Backoff base in seconds.
    #[arg(long, default_value_t = RetryPolicy::default().backoff_base)]
    backoff_base: f64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    seed: u64,
    /// Temperature applied to the emitted log-probabilities; 1 is calibrated.
    #[arg(long, default_value_t = 1.0)]
    miscalibration: f64,
    /// Dirichlet concentration of the underlying distributions.
    #[arg(long, default_value_t = 1.0)]
    concentration: f64,
    #[arg(long, default_value = "synthetic")]
    dataset: String,
    #[arg(long, default_value = "synthetic-model")]
    model: String,
    /// Output file; standard output when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_score_fn(s: &str) -> Result<ScoreFunction, String> {
    s.parse().map_err(|e: confbench_core::Error| e.to_string())
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e: confbench_core::Error| e.to_string())
}

fn parse_dimension(s: &str) -> Result<Dimension, String> {
    s.parse().map_err(|e: confbench_core::Error| e.to_string())
}

fn parse_entropy_scope(s: &str) -> Result<EntropyScope, String> {
    match s.to_ascii_lowercase().replace('-', "_").as_str() {
        "all_records" | "all" => Ok(EntropyScope::AllRecords),
        "test_split" | "test" => Ok(EntropyScope::TestSplit),
        _ => Err(format!("unknown entropy scope {s:?} (all_records or test_split)")),
    }
}

/// Exit 1: the command ran but found problems. Exit 2: it could not run.
enum Failure {
    Findings(String),
    Usage(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn validate(args: ValidateArgs) -> Result<(), Failure> {
    let profile = DatasetProfile::lookup(&args.dataset)?;
    let records = ingest::parse_records(&args.input)
        .map_err(|e| Failure::Usage(format!("{}: {e}", args.input.display())))?;
    let report = ingest::validate_corpus(&records, &profile);
    print!("{report}");
    if report.is_clean() {
        Ok(())
    } else {
        Err(Failure::Findings(format!("{} violation(s)", report.violation_count())))
    }
}

fn run_config(args: &RunArgs) -> Result<BenchmarkConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => BenchmarkConfig::from_json_file(path)?,
        None => {
            let mut cfg = BenchmarkConfig {
                inputs: args.input.clone(),
                ..Default::default()
            };
            if !args.alpha.is_empty() {
                cfg.alphas = args.alpha.clone();
            }
            if !args.score_fn.is_empty() {
                cfg.score_functions = args.score_fn.clone();
            }
            if !args.seed.is_empty() {
                cfg.seeds = args.seed.clone();
            }
            if let Some(f) = args.calibration_fraction {
                cfg.calibration_fraction = f;
            }
            if let Some(s) = args.entropy_scope {
                cfg.entropy_scope = s;
            }
            cfg
        }
    };
    if let Some(dir) = &args.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    for input in &cfg.inputs {
        if !input.is_file() {
            return Err(Failure::Usage(format!("input {} does not exist", input.display())));
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let cfg = run_config(&args)?;
    let outcome = bench::run(&cfg)?;
    let mut written = bench::emit(&outcome.report, &args.formats, &cfg.output_dir)?;
    written.extend(bench::emit_plot_data(&outcome, &cfg.output_dir)?);
    if let Some(dims) = &args.group_by {
        let path = cfg.output_dir.join("summary.csv");
        let rows = bench::aggregate(&outcome.report, dims)?;
        std::fs::write(&path, bench::summary_to_csv(dims, &rows)).map_err(|e| format!("{}: {e}", path.display()))?;
        written.push(path);
    }
    for path in &written {
        println!("wrote {}", path.display());
    }
    let errors = outcome.report.error_count();
    println!("{} row(s), {errors} error row(s)", outcome.report.rows.len());
    if errors > 0 {
        return Err(Failure::Findings(format!("{errors} configuration(s) failed; see the report")));
    }
    Ok(())
}

fn collect(args: CollectArgs) -> Result<(), Failure> {
    let questions = Question::load(&args.questions)?;
    let mut cfg = EndpointConfig::new(&args.base_url, &args.model).with_key_from_env(&args.api_key_env);
    cfg.max_concurrency = args.concurrency;
    cfg.timeout = args.timeout;
    cfg.retry.max_attempts = args.max_attempts;
    cfg.retry.backoff_base = args.backoff_base;
    cfg.validate()?;
    if cfg.api_key.is_none() {
        eprintln!("note: {} is not set; sending requests without an API key", args.api_key_env);
    }

    let runtime = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
    let summary = runtime.block_on(collect_corpus(&cfg, &PromptTemplate::builtin_all(), questions, &args.output))?;
    println!(
        "{} question(s): {} written to {}, {} failed, {} excluded (see {})",
        summary.questions,
        summary.written,
        args.output.display(),
        summary.failed,
        summary.excluded,
        summary.failure_log.display()
    );
    if summary.failed > 0 {
        return Err(Failure::Findings(format!("{} question(s) failed", summary.failed)));
    }
    Ok(())
}

fn write_synth(records: &[confbench_core::EvalRecord], output: Option<&Path>) -> io::Result<()> {
    match output {
        Some(path) => {
            let mut out = BufWriter::new(File::create(path)?);
            ingest::write_records(records, &mut out)?;
            out.flush()
        }
        None => {
            let mut out = BufWriter::new(io::stdout().lock());
            ingest::write_records(records, &mut out)?;
            out.flush()
        }
    }
}

fn synth(args: SynthArgs) -> Result<(), Failure> {
    let cfg = SynthConfig {
        n: args.n,
        k: args.k,
        seed: args.seed,
        temperature: args.miscalibration,
        concentration: args.concentration,
        dataset_id: args.dataset,
        model_id: args.model,
    };
    let records = synth::generate(&cfg)?;
    write_synth(&records, args.output.as_deref()).map_err(|e| match &args.output {
        Some(p) => format!("{}: {e}", p.display()),
        None => e.to_string(),
    })?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .init();

    let result = match cli.command {
        Command::Validate(a) => validate(a),
        Command::Run(a) => run(a),
        Command::Collect(a) => collect(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Findings(msg)) => {
            eprintln!("confbench: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("confbench: error: {msg}");
            ExitCode::from(2)
        }
    }
}
