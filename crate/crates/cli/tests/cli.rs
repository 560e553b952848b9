//! End-to-end tests driving the compiled `pcpo` binary.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_pcpo");
const FIXTURE: &str = concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../core/tests/fixtures/golden_corpus.jsonl"
);

fn pcpo(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn pcpo")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn select_fixture(dir: &Path, extra: &[&str]) -> (Output, std::path::PathBuf) {
    let pairs = dir.join("pairs.jsonl");
    let mut args = vec![
        "select",
        "--input",
        FIXTURE,
        "--output",
        pairs.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    (pcpo(&args), pairs)
}

#[test]
fn select_emits_pairs_and_summary() {
    let dir = TempDir::new().unwrap();
    let (out, pairs) = select_fixture(dir.path(), &[]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert!(out.stdout.is_empty(), "pair data must not leak to stdout");
    let stderr = stderr_of(&out);
    assert!(stderr.contains("pairs emitted: 19"), "{stderr}");
    assert!(stderr.contains("all-correct skips: 1"), "{stderr}");
    assert!(stderr.contains("all-wrong skips: 1"), "{stderr}");
    let content = std::fs::read_to_string(&pairs).unwrap();
    assert_eq!(content.lines().count(), 19);
}

#[test]
fn select_output_is_deterministic_across_jobs() {
    let dir = TempDir::new().unwrap();
    let (out_serial, pairs_serial) = select_fixture(dir.path(), &["--jobs", "1"]);
    assert!(out_serial.status.success());
    let dir2 = TempDir::new().unwrap();
    let (out_par, pairs_par) = select_fixture(dir2.path(), &["--jobs", "4"]);
    assert!(out_par.status.success());
    assert_eq!(
        std::fs::read(&pairs_serial).unwrap(),
        std::fs::read(&pairs_par).unwrap()
    );
}

#[test]
fn select_threshold_drops_pairs() {
    let dir = TempDir::new().unwrap();
    let (out, pairs) = select_fixture(dir.path(), &["--min-s-w", "1.0"]);
    assert!(out.status.success());
    assert!(stderr_of(&out).contains("pairs emitted: 0"));
    assert_eq!(std::fs::read(&pairs).unwrap(), b"");

    // out-of-range threshold rejected up front
    let (out, _) = select_fixture(dir.path(), &["--min-s-w", "1.5"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
}

#[test]
fn select_reads_config_file_with_flag_override() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("run.conf");
    let pairs = dir.path().join("pairs.jsonl");
    std::fs::write(
        &config,
        format!(
            "# curation settings\ninput = {}\noutput = {}\nmin_s_w = 1.5\n",
            FIXTURE,
            pairs.display()
        ),
    )
    .unwrap();
    let out = pcpo(&[
        "select",
        "--config",
        config.to_str().unwrap(),
        "--min-s-w",
        "0.0",
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("pairs emitted: 19"));
}

#[test]
fn select_rejects_unknown_config_key() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("run.conf");
    std::fs::write(&config, "inptu = x.jsonl\n").unwrap();
    let out = pcpo(&["select", "--config", config.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
}

#[test]
fn select_missing_input_is_io_error() {
    let dir = TempDir::new().unwrap();
    let out = pcpo(&[
        "select",
        "--input",
        "/nonexistent/corpus.jsonl",
        "--output",
        dir.path().join("pairs.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr_of(&out));
}

#[test]
fn select_malformed_corpus_is_schema_error() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("bad.jsonl");
    std::fs::write(&corpus, "{\"id\": \"p1\"}\n").unwrap();
    let out = pcpo(&[
        "select",
        "--input",
        corpus.to_str().unwrap(),
        "--output",
        dir.path().join("pairs.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("error:"));
}

#[test]
fn validate_accepts_fixture_and_rejects_duplicates() {
    let out = pcpo(&["validate", "--input", FIXTURE]);
    assert!(out.status.success());
    assert!(stderr_of(&out).contains("10 records valid"));

    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("dup.jsonl");
    let first_line = std::fs::read_to_string(FIXTURE)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    std::fs::write(&corpus, format!("{first_line}\n{first_line}\n")).unwrap();
    let out = pcpo(&["validate", "--input", corpus.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
}

#[test]
fn stats_reports_rank_distribution() {
    let dir = TempDir::new().unwrap();
    let (out, pairs) = select_fixture(dir.path(), &[]);
    assert!(out.status.success());
    let out = pcpo(&["stats", "--input", pairs.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let report: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("stats stdout is JSON");
    assert_eq!(report["total_pairs"], 19);
    let freq = report["rank_frequencies"]["1"].as_f64().unwrap();
    assert!((freq - 18.0 / 19.0).abs() <= 1e-12);

    // same report written to a file
    let report_path = dir.path().join("report.json");
    let out = pcpo(&[
        "stats",
        "--input",
        pairs.to_str().unwrap(),
        "--output",
        report_path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let from_file: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(from_file, report);
}

#[test]
fn stats_rejects_out_of_range_score() {
    let dir = TempDir::new().unwrap();
    let (out, pairs) = select_fixture(dir.path(), &[]);
    assert!(out.status.success());
    let corrupted = std::fs::read_to_string(&pairs)
        .unwrap()
        .replacen("\"s_w\":", "\"s_w\":1e2, \"was\":", 1);
    std::fs::write(&pairs, corrupted).unwrap();
    let out = pcpo(&["stats", "--input", pairs.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
}

#[test]
fn loss_check_passes_on_selected_pairs() {
    let dir = TempDir::new().unwrap();
    let (out, pairs) = select_fixture(dir.path(), &[]);
    assert!(out.status.success());
    let out = pcpo(&["loss-check", "--input", pairs.to_str().unwrap(), "--seed", "7"]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["pairs_checked"], 19);
    assert_eq!(report["gradient_failures"], 0);
    assert_eq!(report["reduction_failures"], 0);
    assert!(stderr_of(&out).contains("loss check passed over 19 pairs"));
}

#[test]
fn loss_check_on_empty_pairs_file_passes() {
    let dir = TempDir::new().unwrap();
    let pairs = dir.path().join("empty.jsonl");
    std::fs::write(&pairs, "").unwrap();
    let out = pcpo(&["loss-check", "--input", pairs.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["pairs_checked"], 0);
}
