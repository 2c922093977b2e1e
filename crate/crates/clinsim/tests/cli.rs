//! Integration coverage for the command-line entry points.

use std::fs;
use std::path::{Path, PathBuf};

use clinsim::cli::{run, Cli, Command, CommonArgs, ConsultArgs, EvaluateArgs, StatsArgs};

fn manifest_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).to_path_buf()
}

fn common(out: &Path) -> CommonArgs {
    CommonArgs {
        out: out.to_path_buf(),
        prompts: manifest_dir().join("prompts"),
        language: "en".to_string(),
        scripts: manifest_dir().join("fixtures/scripts"),
        descriptors: None,
        seed: 0,
    }
}

fn consult_args(out: &Path) -> ConsultArgs {
    ConsultArgs {
        common: common(out),
        corpus: manifest_dir().join("fixtures/records"),
        doctor: "scripted:doctor_golden".to_string(),
        patient: "scripted:patient_golden".to_string(),
        exam_names: manifest_dir().join("fixtures/exam_names.txt"),
        exam_aliases: None,
        max_rounds: 10,
        parallelism: 2,
    }
}

#[test]
fn consult_is_reproducible_and_writes_manifest() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run(Cli { command: Command::Consult(consult_args(dir_a.path())) }).unwrap();
    run(Cli { command: Command::Consult(consult_args(dir_b.path())) }).unwrap();
    let a = fs::read_to_string(dir_a.path().join("transcripts.jsonl")).unwrap();
    let b = fs::read_to_string(dir_b.path().join("transcripts.jsonl")).unwrap();
    assert_eq!(a, b, "identical configs must produce byte-identical exports");
    assert!(dir_a.path().join("manifest.json").is_file());
    assert_eq!(a.lines().count(), 6, "one transcript line per fixture record");
    for i in 1..=6 {
        assert!(dir_a.path().join(format!("reports/fx-{i:03}.json")).is_file());
    }
}

#[test]
fn evaluate_scores_a_consult_run() {
    let run_dir = tempfile::tempdir().unwrap();
    run(Cli { command: Command::Consult(consult_args(run_dir.path())) }).unwrap();
    let eval_dir = tempfile::tempdir().unwrap();
    run(Cli {
        command: Command::Evaluate(EvaluateArgs {
            common: common(eval_dir.path()),
            run: run_dir.path().to_path_buf(),
            corpus: manifest_dir().join("fixtures/records"),
            judge: "scripted:judge_mixed".to_string(),
            resamples: 100,
        }),
    })
    .unwrap();
    let csv = fs::read_to_string(eval_dir.path().join("scores.csv")).unwrap();
    // header + 6 records x 5 dimensions
    assert_eq!(csv.lines().count(), 31);
    assert!(csv.contains("fx-001,Symptoms,4,100"));
    assert!(eval_dir.path().join("aggregate.json").is_file());
}

#[test]
fn missing_corpus_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = consult_args(dir.path());
    args.corpus = PathBuf::from("/nonexistent/corpus");
    let err = run(Cli { command: Command::Consult(args) }).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn stats_histogram_matches_manifest() {
    let dir = tempfile::tempdir().unwrap();
    run(Cli {
        command: Command::Stats(StatsArgs {
            common: common(dir.path()),
            corpus: manifest_dir().join("fixtures/department_manifest.jsonl"),
        }),
    })
    .unwrap();
    let csv = fs::read_to_string(dir.path().join("histogram.csv")).unwrap();
    assert!(csv.contains("Surgery,180"));
    assert!(csv.contains("total,506"));
}
