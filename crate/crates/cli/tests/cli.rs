//! Behavioral tests for the command-line surface: exit codes, config
//! precedence, and file handling edge cases. Kept separate from the
//! acceptance checklist so a failure here points at the front end, not the
//! pipeline.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ealm")).args(args).output().expect("binary launches")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["no-such-subcommand"]).status.code(), Some(2));
    // Missing a required flag.
    let out = run(&["summarize", "--model", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_of(&out).contains("--lm"), "usage text should name the missing flag");
}

#[test]
fn runtime_errors_exit_with_one_and_name_the_problem() {
    let out = run(&["lm-train", "--corpus", "/no/such/file", "--out", "/tmp/never-written.lm"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("/no/such/file"));
}

#[test]
fn evaluate_rejects_misaligned_files_naming_both() {
    let dir = tempfile::tempdir().unwrap();
    let short = dir.path().join("short.txt");
    std::fs::write(&short, "one line\n").unwrap();
    let heldout = data_path("toy_heldout.txt");
    let out = run(&[
        "evaluate",
        "--candidates",
        short.to_str().unwrap(),
        "--sources",
        heldout.to_str().unwrap(),
        "--references",
        data_path("toy_heldout_refs.txt").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(err.contains("short.txt") && err.contains("toy_heldout.txt"), "got: {err}");

    // Same check for a reference column of the wrong length.
    let cands = dir.path().join("cands.txt");
    let content = "a b\n".repeat(40);
    std::fs::write(&cands, content).unwrap();
    let out = run(&[
        "evaluate",
        "--candidates",
        cands.to_str().unwrap(),
        "--sources",
        heldout.to_str().unwrap(),
        "--references",
        short.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(err.contains("cands.txt") && err.contains("short.txt"), "got: {err}");
}

#[test]
fn invalid_config_values_name_the_key() {
    let out = run(&[
        "lm-train",
        "--corpus",
        data_path("toy_corpus.txt").to_str().unwrap(),
        "--out",
        "/tmp/never-written.lm",
        "--set",
        "tau=1.5",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("tau"), "got: {}", stderr_of(&out));

    let out = run(&[
        "lm-train",
        "--corpus",
        data_path("toy_corpus.txt").to_str().unwrap(),
        "--out",
        "/tmp/never-written.lm",
        "--set",
        "no_such_key=1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("no_such_key"), "got: {}", stderr_of(&out));
}

fn lm_header_order(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .find(|l| l.starts_with("order "))
        .map(str::to_owned)
        .unwrap_or_default()
}

#[test]
fn config_precedence_is_flag_over_set_over_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# comment line\norder=2\n\nsmoothing=0.25\n").unwrap();
    let corpus = data_path("toy_corpus.txt");
    let out_lm = dir.path().join("a.lm");

    // File value applies on its own.
    let out = run(&[
        "lm-train",
        "--corpus",
        corpus.to_str().unwrap(),
        "--out",
        out_lm.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert_eq!(lm_header_order(&out_lm), "order 2");

    // --set overrides the file.
    let out = run(&[
        "lm-train",
        "--corpus",
        corpus.to_str().unwrap(),
        "--out",
        out_lm.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "order=4",
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert_eq!(lm_header_order(&out_lm), "order 4");

    // The dedicated flag beats both.
    let out = run(&[
        "lm-train",
        "--corpus",
        corpus.to_str().unwrap(),
        "--out",
        out_lm.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "order=4",
        "--order",
        "5",
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    assert_eq!(lm_header_order(&out_lm), "order 5");
}

#[test]
fn lead_writes_first_words_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.txt");
    std::fs::write(&input, "one two three four five\nshort\n").unwrap();
    let out = run(&["lead", "--input", input.to_str().unwrap(), "-n", "3"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout), "one two three\nshort\n");
}

#[test]
fn multi_run_training_and_blank_line_alignment() {
    let dir = tempfile::tempdir().unwrap();
    let lm = dir.path().join("toy.lm");
    let agent = dir.path().join("toy.agent");
    let corpus = data_path("toy_corpus.txt");

    let out = run(&[
        "lm-train",
        "--corpus",
        corpus.to_str().unwrap(),
        "--stopwords",
        data_path("stopwords.txt").to_str().unwrap(),
        "--out",
        lm.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));

    // Two tiny runs write suffixed artifacts instead of clobbering one file.
    let out = run(&[
        "train",
        "--corpus",
        corpus.to_str().unwrap(),
        "--lm",
        lm.to_str().unwrap(),
        "--out",
        agent.to_str().unwrap(),
        "--runs",
        "2",
        "--set",
        "episodes=2",
        "--set",
        "checkpoint_every=1",
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    for suffix in ["run0", "run1"] {
        let model = dir.path().join(format!("toy.agent.{suffix}"));
        assert!(model.exists(), "missing {}", model.display());
        assert!(
            dir.path().join(format!("toy.agent.{suffix}.log")).exists(),
            "missing log for {suffix}"
        );
    }
    assert!(!agent.exists(), "multi-run training must not write the bare output path");

    // Blank input lines pass through so outputs stay line-aligned.
    let input = dir.path().join("in.txt");
    std::fs::write(&input, "derek said monday that the panel approved the budget .\n\nshort\n")
        .unwrap();
    let sums = dir.path().join("out.txt");
    let out = run(&[
        "summarize",
        "--model",
        dir.path().join("toy.agent.run0").to_str().unwrap(),
        "--lm",
        lm.to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
        "--output",
        sums.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_of(&out));
    let text = std::fs::read_to_string(&sums).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].is_empty(), "blank input line must stay blank");
    assert!(!lines[0].is_empty() && !lines[2].is_empty());
}
