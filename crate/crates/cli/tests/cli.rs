//! End-to-end tests of the `auditreg` binary: subcommand behavior and the
//! exit-code contract (0 accepted/success, 1 violation found, 2 usage or
//! parse error).

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_auditreg"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_temp(name: &str, contents: &str) -> PathBuf {
    let path = std::env::temp_dir().join(format!("auditreg-cli-{}-{name}", std::process::id()));
    std::fs::write(&path, contents).expect("temp file");
    path
}

/// The scenario where a read overlaps an audit but the second write
/// completes before the audit begins; `audit` is the reported set.
fn overlap_history(audit: &str) -> String {
    format!(
        "\
init r0 _|_
roles r0 writer=0 readers=1 auditors=0,2
1 0 r0 1 inv write 1 -
2 0 r0 1 resp write 1 ok
3 1 r0 2 inv read - -
4 0 r0 3 inv write 2 -
5 0 r0 3 resp write 2 ok
6 2 r0 4 inv audit - -
7 2 r0 4 resp audit - {audit}
8 1 r0 2 resp read - 1
"
    )
}

#[test]
fn run_demo_prints_history_and_exits_zero() {
    let out = run(&["run", "--algorithm", "a3", "--script", "demo"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("init r0"));
    assert!(text.contains("resp audit"));
}

#[test]
fn run_is_deterministic_per_seed() {
    let first = run(&["run", "--algorithm", "a6", "--seed", "42"]);
    let second = run(&["run", "--algorithm", "a6", "--seed", "42"]);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
    let other = run(&["run", "--algorithm", "a6", "--seed", "43"]);
    assert_ne!(first.stdout, other.stdout);
}

#[test]
fn run_rejects_unknown_algorithms() {
    let out = run(&["run", "--algorithm", "a9"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_accepts_workload_files() {
    let path = write_temp(
        "workload",
        "\
algorithm a4
initial 7
writer 0
readers 1 2
auditors 0
program 0 write 3, write 5, audit
program 1 read, read
program 2 read
",
    );
    let out = run(&["run", "--algorithm", "a4", "--script", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("inv write 3"));
}

#[test]
fn explore_accepts_correct_algorithms() {
    let out = run(&["explore", "--algorithm", "a3", "--exhaustive"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("accepted: 20"));
}

#[test]
fn explore_finds_mutant_counterexamples() {
    let out = run(&["explore", "--algorithm", "a4-mutant-nobitreset", "--exhaustive"]);
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    assert!(text.contains("rejected history"));
    assert!(text.contains("violation:"));

    let out = run(&["explore", "--algorithm", "a7-mutant-nolog", "--exhaustive"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("Completeness"));
}

#[test]
fn explore_validates_schedule_count() {
    let out = run(&["explore", "--algorithm", "a4", "--max-schedules", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn check_decides_both_definitions_on_the_overlap_scenario() {
    let reported = write_temp("reported", &overlap_history("{1:1}"));
    let missed = write_temp("missed", &overlap_history("{}"));

    let out = run(&["check", "--definition", "1", reported.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    assert!(stdout(&out).contains("witness:"));

    let out = run(&["check", "--definition", "1", missed.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("Completeness"));

    let out = run(&["check", "--definition", "2", missed.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn check_reports_parse_errors_with_line_numbers() {
    let path = write_temp("truncated", "init r0 _|_\nroles r0 writer=0 readers=1 auditors=0\n1 0 r0 1 inv\n");
    let out = run(&["check", "--definition", "1", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn consensus_two_process_campaign_is_clean() {
    let out = run(&["consensus", "--two", "--inputs", "3,5", "--exhaustive"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("violations: 0"));

    let out = run(&["consensus", "--two", "--inputs", "3,5", "--exhaustive", "--backing", "a3"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn consensus_n_process_campaign_is_clean() {
    let out = run(&["consensus", "--n", "3", "--seed", "7", "--count", "500"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("violations: 0"));
}

#[test]
fn consensus_rejects_duplicate_inputs() {
    let out = run(&["consensus", "--two", "--inputs", "3,3"]);
    assert_eq!(out.status.code(), Some(2));
}
