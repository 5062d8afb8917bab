mod common;

use std::process::{Command, Output};

use common::*;

fn assist(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_assist"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn reports_match_the_goldens() {
    assert_eq!(stdout(&assist(&["sweep", "configs"])), golden("sampling_configs.txt"));
    assert_eq!(
        stdout(&assist(&["defects", "render", "--sweep", "sampling"])),
        golden("sampling_defects.txt")
    );
    assert_eq!(
        stdout(&assist(&["defects", "render", "--sweep", "model"])),
        golden("model_defects.txt")
    );
    assert_eq!(stdout(&assist(&["defects", "summarize"])), golden("summary.txt"));
}

#[test]
fn annotations_are_recorded_and_rendered() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("notes.json");
    let store = store.to_str().unwrap();
    let add = |extra: &[&str]| {
        let mut args = vec!["defects", "add", "--store", store];
        args.extend_from_slice(extra);
        assist(&args)
    };
    stdout(&add(&[
        "--run",
        "sampling-06-task2",
        "--category",
        "hallucination",
        "--variant",
        "b",
        "--count",
        "2",
    ]));
    assert!(!add(&[
        "--run",
        "sampling-06-task2",
        "--category",
        "code_duplication",
        "--variant",
        "a"
    ])
    .status
    .success());
    assert!(!add(&["--run", "sampling-99-task1", "--category", "hallucination"])
        .status
        .success());

    let text = stdout(&assist(&[
        "defects",
        "render",
        "--sweep",
        "sampling",
        "--annotations",
        store,
    ]));
    assert!(text.contains("- / b x2"), "{text}");
    assert_eq!(text.matches(" / ").count(), 2, "{text}");
}

#[test]
fn repository_commands_read_the_checkout() {
    let repo = fixture_repo_dir();
    let repo = repo.to_str().unwrap();
    let found = stdout(&assist(&["repo", "find", "Menu", "--repo-dir", repo]));
    assert!(found.contains("src/pp/battleship/Menu.java"));
    let methods = stdout(&assist(&[
        "repo",
        "methods",
        "src/pp/battleship/Menu.java",
        "--repo-dir",
        repo,
    ]));
    assert!(!methods.trim().is_empty());
    assert!(!assist(&["repo", "fetch", "../outside", "--repo-dir", repo])
        .status
        .success());
}

#[test]
fn replayed_sweep_records_each_run_once() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs");
    let runs = runs.to_str().unwrap();
    let repo = fixture_repo_dir();
    let args = [
        "sweep",
        "run",
        "--replay",
        "--only",
        "sampling-01-task1",
        "--runs-dir",
        runs,
        "--repo-dir",
        repo.to_str().unwrap(),
    ];
    stdout(&assist(&args));
    let ledger = std::fs::read_to_string(dir.path().join("runs/completed-runs.jsonl")).unwrap();
    assert_eq!(ledger.lines().count(), 1);
    assert!(ledger.contains("sampling-01-task1"));
    assert!(dir.path().join("runs/sampling-01-task1.jsonl").exists());

    // a second invocation skips the recorded run
    assist(&args);
    let ledger = std::fs::read_to_string(dir.path().join("runs/completed-runs.jsonl")).unwrap();
    assert_eq!(ledger.lines().count(), 1);
}
