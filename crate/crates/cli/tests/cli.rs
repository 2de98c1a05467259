//! Exit-code and file contracts of the `confbench` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn confbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_confbench"))
        .args(args)
        .output()
        .expect("spawn confbench")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth_file(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let path = dir.join(name);
    let mut args = vec!["synth", "--output", s(&path)];
    args.extend_from_slice(extra);
    let o = confbench(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    path
}

#[test]
fn every_subcommand_has_help() {
    let dir = tempfile::tempdir().unwrap();
    for sub in [vec!["--help"], vec!["validate", "--help"], vec!["run", "--help"], vec!["collect", "--help"], vec!["synth", "--help"]] {
        let o = Command::new(env!("CARGO_BIN_EXE_confbench"))
            .args(&sub)
            .current_dir(dir.path())
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{sub:?}");
        assert!(String::from_utf8_lossy(&o.stdout).contains("Usage"));
    }
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0, "help wrote files");
}

#[test]
fn missing_subcommand_is_a_usage_error() {
    assert_eq!(code(&confbench(&[])), 2);
    assert_eq!(code(&confbench(&["frobnicate"])), 2);
}

#[test]
fn synth_writes_parseable_deterministic_records() {
    let dir = tempfile::tempdir().unwrap();
    let flags = ["--n", "100", "--k", "4", "--seed", "7", "--miscalibration", "1"];
    let a = synth_file(dir.path(), "a.jsonl", &flags);
    let b = synth_file(dir.path(), "b.jsonl", &flags);
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());
    assert_eq!(confbench_core::ingest::parse_records(&a).unwrap().len(), 100);

    let stdout = confbench(&["synth", "--n", "100", "--k", "4", "--seed", "7", "--miscalibration", "1"]);
    assert_eq!(stdout.stdout, bytes);
}

#[test]
fn synth_rejects_bad_ranges() {
    for bad in [["--n", "1", "--k", "4"], ["--n", "10", "--k", "11"], ["--n", "10", "--k", "1"]] {
        let mut args = vec!["synth", "--seed", "0"];
        args.extend_from_slice(&bad);
        assert_eq!(code(&confbench(&args)), 2, "{bad:?}");
    }
    assert_eq!(code(&confbench(&["synth", "--n", "10", "--k", "4", "--seed", "0", "--miscalibration", "0"])), 2);
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = synth_file(dir.path(), "sqa.jsonl", &["--n", "2020", "--k", "5", "--seed", "1", "--dataset", "ScienceQA"]);
    let o = confbench(&["validate", "--input", s(&good), "--dataset", "ScienceQA"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("profile: ScienceQA"));

    let short = synth_file(dir.path(), "short.jsonl", &["--n", "2019", "--k", "5", "--seed", "1", "--dataset", "ScienceQA"]);
    assert_eq!(code(&confbench(&["validate", "--input", s(&short), "--dataset", "ScienceQA"])), 1);

    let wide = synth_file(dir.path(), "wide.jsonl", &["--n", "2020", "--k", "6", "--seed", "1", "--dataset", "ScienceQA"]);
    assert_eq!(code(&confbench(&["validate", "--input", s(&wide), "--dataset", "ScienceQA"])), 1);

    let text = fs::read_to_string(&good).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.insert(3, "{not json");
    let corrupt = dir.path().join("corrupt.jsonl");
    fs::write(&corrupt, lines.join("\n")).unwrap();
    let o = confbench(&["validate", "--input", s(&corrupt), "--dataset", "ScienceQA"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));

    assert_eq!(code(&confbench(&["validate", "--input", s(&good), "--dataset", "NoSuchSet"])), 2);
    assert_eq!(code(&confbench(&["validate", "--input", s(&dir.path().join("nope")), "--dataset", "AI2D"])), 2);
}

#[test]
fn run_with_fixture_config_writes_three_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = fixtures().join("benchmark.json");
    let o = confbench(&["run", "--config", s(&cfg), "--output-dir", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["report.csv", "report.json", "report.md", "plots/accuracy_vs_set_size.csv", "plots/entropy.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let reports = fs::read_dir(&out).unwrap().filter(|e| e.as_ref().unwrap().path().is_file()).count();
    assert_eq!(reports, 3);
    assert_eq!(fs::read_to_string(out.join("report.csv")).unwrap().lines().count(), 4);
}

#[test]
fn run_flags_mirror_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixtures().join("synthetic_k4_n2000.jsonl");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = confbench(&["run", "--input", s(&input), "--output-dir", s(&a)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = confbench(&["run", "--config", s(&fixtures().join("benchmark.json")), "--output-dir", s(&b)]);
    assert_eq!(code(&o), 0);
    for f in ["report.csv", "report.json", "report.md"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }

    let c = dir.path().join("c");
    let o = confbench(&[
        "run", "--input", s(&input), "--output-dir", s(&c), "--alpha", "0.05", "--alpha", "0.2",
        "--score-fn", "MS", "--seed", "1", "--seed", "2", "--formats", "csv", "--group-by", "alpha",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(!c.join("report.json").exists());
    assert_eq!(fs::read_to_string(c.join("report.csv")).unwrap().lines().count(), 5);
    assert_eq!(fs::read_to_string(c.join("summary.csv")).unwrap().lines().count(), 3);
}

#[test]
fn run_config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = confbench(&["run", "--input", s(&dir.path().join("missing.jsonl")), "--output-dir", s(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("missing.jsonl"));

    let cfg = dir.path().join("bad.json");
    let input = fixtures().join("synthetic_k4_n2000.jsonl");
    fs::write(&cfg, format!(r#"{{"inputs": [{:?}], "alphas": [1.5]}}"#, s(&input))).unwrap();
    let o = confbench(&["run", "--config", s(&cfg), "--output-dir", s(&dir.path().join("out"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("(0, 1)"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());

    let o = confbench(&["run", "--input", s(&input), "--alpha", "1.5", "--output-dir", s(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("(0, 1)"));

    fs::write(&cfg, r#"{"inputs": ["x"], "colour": 1}"#).unwrap();
    assert_eq!(code(&confbench(&["run", "--config", s(&cfg)])), 2);
    assert_eq!(code(&confbench(&["run", "--config", s(&cfg), "--input", s(&input)])), 2);
}

#[test]
fn error_rows_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let tiny = dir.path().join("tiny.jsonl");
    let full = fs::read_to_string(fixtures().join("synthetic_k4_n2000.jsonl")).unwrap();
    fs::write(&tiny, full.lines().next().unwrap()).unwrap();
    let out = dir.path().join("out");
    let o = confbench(&["run", "--input", s(&tiny), "--output-dir", s(&out)]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert!(fs::read_to_string(out.join("report.csv")).unwrap().contains("ERROR: "));
}

#[test]
fn collect_logs_unreachable_questions_and_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let questions = dir.path().join("q.jsonl");
    fs::write(
        &questions,
        r#"{"question_id":"q1","dataset_id":"AI2D","question":"?","options":{"A":"x","B":"y"},"true_label":"A","images":["https://example.org/1.png"]}
"#,
    )
    .unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let out = dir.path().join("records.jsonl");
    let base = format!("http://127.0.0.1:{port}");
    let o = confbench(&[
        "collect", "--questions", s(&questions), "--output", s(&out), "--base-url", &base,
        "--model", "m", "--max-attempts", "2", "--backoff-base", "0", "--timeout", "2",
    ]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&out).unwrap(), "");
    let log = fs::read_to_string(dir.path().join("records.jsonl.failures.jsonl")).unwrap();
    assert!(log.contains("\"q1\"") && log.contains("transport"));

    let o = confbench(&["collect", "--questions", s(&dir.path().join("none")), "--output", s(&out), "--base-url", &base, "--model", "m"]);
    assert_eq!(code(&o), 2);
}
