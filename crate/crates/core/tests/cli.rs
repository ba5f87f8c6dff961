//! End-to-end checks of the command-line interface.

use std::path::Path;
use std::process::{Command, Output};

fn typefuzz(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_typefuzz"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

#[test]
fn dump_analysis_is_deterministic_and_ordered() {
    let args = ["fuzz", "--program", "bench:thumbnail", "--mode", "spoton", "--budget", "10t", "--dump-analysis"];
    let first = typefuzz(&args);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let second = typefuzz(&args);
    let (a, b) = (stdout(&first), stdout(&second));
    assert_eq!(a, b, "report must be identical across invocations");
    // Ascending distances: the calendar type precedes the file type.
    let cal = a.find("(Cal, 2)").expect("calendar entry present");
    let file = a.find("(File, 5)").expect("file entry present");
    assert!(cal < file);
}

#[test]
fn dump_analysis_empty_string_table_renders_empty_list() {
    let out = typefuzz(&[
        "fuzz", "--program", "bench:thumbnail", "--mode", "baseline", "--budget", "1t",
        "--dump-analysis",
    ]);
    assert!(stdout(&out).contains("strings: []"));
}

#[test]
fn fuzz_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let out = typefuzz(&[
        "fuzz", "--program", "bench:nikoshen-analog", "--mode", "str-opt", "--budget", "400t",
        "--reps", "2", "--seed", "7", "--out", out_dir,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    for rep in 0..2 {
        let csv_path = dir.path().join(format!("str-opt_rep{rep:03}.csv"));
        let csv = std::fs::read_to_string(&csv_path).unwrap();
        assert!(csv.starts_with("elapsed_s,tests,app_cov,total_cov\n"));
    }
    let summary = std::fs::read_to_string(dir.path().join("summary_str-opt.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(parsed["mode"], "str-opt");
    assert_eq!(parsed["repetitions"], 2);
    assert_eq!(parsed["runs"].as_array().unwrap().len(), 2);
}

#[test]
fn fuzz_csvs_are_reproducible() {
    let dir1 = tempfile::tempdir().unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    for dir in [&dir1, &dir2] {
        let out = typefuzz(&[
            "fuzz", "--program", "bench:csv-loader-analog", "--mode", "spoton", "--budget",
            "300t", "--reps", "1", "--seed", "3", "--out", dir.path().to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    let a = std::fs::read(dir1.path().join("spoton_rep000.csv")).unwrap();
    let b = std::fs::read(dir2.path().join("spoton_rep000.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn save_corpus_persists_fci_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = typefuzz(&[
        "fuzz", "--program", "bench:csv-loader-analog", "--mode", "spoton", "--budget", "500t",
        "--reps", "1", "--seed", "1", "--out", dir.path().to_str().unwrap(), "--save-corpus",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let corpus_dir = dir.path().join("corpus_spoton_rep000");
    let count = std::fs::read_dir(&corpus_dir)
        .unwrap()
        .filter(|e| {
            e.as_ref().unwrap().path().extension().and_then(|x| x.to_str()) == Some("fci")
        })
        .count();
    assert!(count >= 1, "at least the seed input is persisted");
}

#[test]
fn compare_emits_reconciling_partitions() {
    let dir = tempfile::tempdir().unwrap();
    let out = typefuzz(&[
        "compare", "--program", "bench:nikoshen-analog", "--modes", "baseline,str-opt",
        "--budget", "600t", "--reps", "3", "--seed", "11", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let (common, only_a, only_b) = (
        json["common"].as_u64().unwrap(),
        json["only_a"].as_u64().unwrap(),
        json["only_b"].as_u64().unwrap(),
    );
    assert_eq!(common + only_a, json["a_total"].as_u64().unwrap());
    assert_eq!(common + only_b, json["b_total"].as_u64().unwrap());
    assert!(dir.path().join("compare_baseline_vs_str-opt.json").exists());
}

#[test]
fn config_errors_exit_with_code_two() {
    // Unknown mode.
    let out = typefuzz(&[
        "fuzz", "--program", "bench:thumbnail", "--mode", "turbo", "--budget", "10t",
    ]);
    assert_eq!(out.status.code(), Some(2));
    // Malformed budget suffix.
    let out = typefuzz(&[
        "fuzz", "--program", "bench:thumbnail", "--mode", "spoton", "--budget", "10x",
    ]);
    assert_eq!(out.status.code(), Some(2));
    // Unknown benchmark.
    let out = typefuzz(&[
        "fuzz", "--program", "bench:unknown", "--mode", "spoton", "--budget", "10t",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn parse_errors_exit_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.ir");
    std::fs::write(&path, "fn main(v0: int) -> void {\n  v1 = klonk\n}\n").unwrap();
    let out = typefuzz(&[
        "fuzz", "--program", path.to_str().unwrap(), "--mode", "baseline", "--budget", "10t",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("syntax error"));
}

#[test]
fn dump_analysis_works_on_ir_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("prog.ir");
    std::fs::write(
        &path,
        "record Rec { x: int }\n\nfn main(v0: Rec) -> void {\n  v1 = fieldload v0.x\n  v2 = const 1\n  v3 = binop eq v1, v2\n  branch v3, Lt, Le\nLt:\n  return\nLe:\n  return\n}\n",
    )
    .unwrap();
    let out = typefuzz(&[
        "fuzz", "--program", path.to_str().unwrap(), "--mode", "baseline", "--budget", "1t",
        "--dump-analysis",
    ]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("(Rec, 2)"));
}

#[test]
fn fuzzing_a_plain_ir_file_reports_missing_generators() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("prog.ir");
    std::fs::write(&path, "fn main(v0: int) -> void {\n  return\n}\n").unwrap();
    let out = typefuzz(&[
        "fuzz", "--program", path.to_str().unwrap(), "--mode", "baseline", "--budget", "10t",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(Path::new(path.to_str().unwrap()).exists());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no generator"));
}
