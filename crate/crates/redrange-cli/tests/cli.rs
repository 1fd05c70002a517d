//! End-to-end checks of the `redrange` binary: exit codes, output formats,
//! artifact layout, and seed determinism of the produced files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fig4() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/fig4.json")
}

fn redrange(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_redrange"))
        .args(args)
        .current_dir(cwd)
        .env_remove("REDRANGE_OUT")
        .output()
        .expect("binary runs")
}

fn ok(cwd: &Path, args: &[&str]) -> String {
    let out = redrange(cwd, args);
    assert!(
        out.status.success(),
        "command {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf8 stdout")
}

#[test]
fn validates_and_solves_the_bundled_scenario() {
    let tmp = tempfile::tempdir().unwrap();
    let fig4 = fig4();

    let stdout = ok(tmp.path(), &["scenario", "validate", fig4.to_str().unwrap()]);
    assert_eq!(stdout, "ok: 12 hosts, 3 subnets, 16 action rules\n");

    let stdout = ok(tmp.path(), &["oracle", fig4.to_str().unwrap()]);
    assert!(stdout.contains("return=92 length=8"), "oracle said: {stdout}");
    assert!(stdout.contains("chain=[13, 12, 8, 7, 11, 10, 5, 1]"), "oracle said: {stdout}");
}

#[test]
fn rejects_missing_and_malformed_input() {
    let tmp = tempfile::tempdir().unwrap();

    let out = redrange(tmp.path(), &["oracle", "no-such-file.json"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error:"), "stderr was: {stderr}");
    assert!(stderr.contains("no-such-file.json"), "stderr was: {stderr}");

    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, "{\"hosts\": []}").unwrap();
    let out = redrange(tmp.path(), &["scenario", "validate", bad.to_str().unwrap()]);
    assert!(!out.status.success());

    let out = redrange(tmp.path(), &["eval", "nope.json", "--scenario", fig4().to_str().unwrap()]);
    assert!(!out.status.success());
}

#[test]
fn mutate_is_seed_deterministic_and_honors_out_root() {
    let tmp = tempfile::tempdir().unwrap();
    let fig4 = fig4();
    let a = tmp.path().join("a.json");
    let b = tmp.path().join("b.json");
    for out in [&a, &b] {
        ok(
            tmp.path(),
            &[
                "mutate",
                fig4.to_str().unwrap(),
                "--kind",
                "ip_scramble",
                "--seed",
                "3",
                "--out",
                out.to_str().unwrap(),
            ],
        );
    }
    let bytes_a = std::fs::read(&a).unwrap();
    assert_eq!(bytes_a, std::fs::read(&b).unwrap(), "same seed, different scenario");
    assert!(a.with_file_name("a.json.manifest.json").exists());

    let other = tmp.path().join("c.json");
    ok(
        tmp.path(),
        &["mutate", fig4.to_str().unwrap(), "--kind", "ip_scramble", "--seed", "4", "--out", other.to_str().unwrap()],
    );
    assert_ne!(bytes_a, std::fs::read(&other).unwrap(), "different seed, same scenario");

    let root = tmp.path().join("stash");
    let out = Command::new(env!("CARGO_BIN_EXE_redrange"))
        .args(["mutate", fig4.to_str().unwrap(), "--kind", "name_scramble", "--seed", "3"])
        .current_dir(tmp.path())
        .env("REDRANGE_OUT", &root)
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(root.join("fig4.name_scramble.3.json").exists());
}

#[test]
fn pipeline_produces_compatible_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let fig4 = fig4();
    let fig4 = fig4.to_str().unwrap();
    let e_dir = tmp.path().join("e");
    let e_dir2 = tmp.path().join("e2");

    for dir in [&e_dir, &e_dir2] {
        ok(
            tmp.path(),
            &[
                "train-e",
                "--scenario",
                fig4,
                "--episodes",
                "5",
                "--seed",
                "7",
                "--out",
                dir.to_str().unwrap(),
            ],
        );
    }
    for name in ["traces.jsonl", "returns.csv", "policy.json", "manifest.json"] {
        assert!(e_dir.join(name).exists(), "missing {name}");
    }
    assert_eq!(
        std::fs::read(e_dir.join("policy.json")).unwrap(),
        std::fs::read(e_dir2.join("policy.json")).unwrap(),
        "same seed, different policy"
    );
    assert_eq!(
        std::fs::read(e_dir.join("traces.jsonl")).unwrap(),
        std::fs::read(e_dir2.join("traces.jsonl")).unwrap(),
        "same seed, different traces"
    );

    let model = tmp.path().join("model.fsm");
    let traces = e_dir.join("traces.jsonl");
    let stdout = ok(
        tmp.path(),
        &["gen-sim", traces.to_str().unwrap(), "--scenario", fig4, "--out", model.to_str().unwrap()],
    );
    assert!(stdout.contains("estimated machine:"), "gen-sim said: {stdout}");
    assert!(model.exists());

    // A machine estimated from one scenario must refuse traces from another.
    let mutated = tmp.path().join("m.json");
    ok(tmp.path(), &["mutate", fig4, "--kind", "ip_scramble", "--seed", "1", "--out", mutated.to_str().unwrap()]);
    let out = redrange(
        tmp.path(),
        &["gen-sim", traces.to_str().unwrap(), "--scenario", mutated.to_str().unwrap(), "--out", model.to_str().unwrap()],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("different scenario"));

    let s_dir = tmp.path().join("s");
    ok(
        tmp.path(),
        &["train-s", model.to_str().unwrap(), "--steps", "300", "--out", s_dir.to_str().unwrap()],
    );
    assert!(s_dir.join("policy.json").exists());
    assert!(s_dir.join("s_curve.csv").exists());

    let policy = s_dir.join("policy.json");
    let stdout = ok(
        tmp.path(),
        &["eval", policy.to_str().unwrap(), "--scenario", fig4, "--episodes", "3", "--seed", "2"],
    );
    let report: serde_json::Value = serde_json::from_str(&stdout).expect("eval prints json");
    assert_eq!(report["episodes"], 3);
    assert_eq!(report["embedding"], "act");
    assert!(report["mean"].is_number());

    let out = redrange(
        tmp.path(),
        &["eval", policy.to_str().unwrap(), "--scenario", fig4, "--embedding", "actnet"],
    );
    assert!(!out.status.success(), "width mismatch must be rejected");
}

#[test]
fn loop_run_writes_report_and_gen_report_renders_it() {
    let tmp = tempfile::tempdir().unwrap();
    let fig4 = fig4();
    let dir = tmp.path().join("loop");
    let stdout = ok(
        tmp.path(),
        &[
            "loop",
            "--scenario",
            fig4.to_str().unwrap(),
            "--episodes",
            "8",
            "--iterations",
            "1",
            "--steps",
            "1200",
            "--seed",
            "5",
            "--out",
            dir.to_str().unwrap(),
        ],
    );
    assert!(stdout.contains("decision="), "loop said: {stdout}");
    assert!(dir.join("report.json").exists());
    assert!(dir.join("manifest.json").exists());
    assert!(dir.join("iter_01/model.fsm").exists());
    assert!(dir.join("iter_01/policy.json").exists());

    ok(tmp.path(), &["gen-report", dir.to_str().unwrap()]);
    let rows = std::fs::read_to_string(dir.join("iterations.csv")).unwrap();
    assert!(rows.starts_with("iteration,algorithm,eval_return"), "header was: {rows}");
    assert_eq!(rows.lines().count(), 2, "one iteration expected:\n{rows}");
    let curves = std::fs::read_to_string(dir.join("curves.csv")).unwrap();
    assert!(curves.lines().count() >= 2, "curve rows expected:\n{curves}");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["iterations"], 1);
}
