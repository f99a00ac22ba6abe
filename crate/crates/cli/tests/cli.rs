use std::path::Path;
use std::process::{Command, Output};

use echoscope::pipeline::{Artifacts, Manifest, SYNTH_CONFIG};
use echoscope::Stage;

fn echoscope(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_echoscope"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn synth_then_all() {
    let dir = tempfile::tempdir().unwrap();
    let o = echoscope(&["synth", "--out", "data"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("data").join(SYNTH_CONFIG).is_file());

    let o = echoscope(&["all", "--config", "data/echoscope.toml", "--iterations", "80"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for stage in Stage::ALL {
        assert!(text.lines().any(|l| l.starts_with(stage.name())), "{text}");
    }
    let out = dir.path().join("data").join("out");
    let manifest = Manifest::read(&out.join(Artifacts::MANIFEST)).unwrap();
    assert_eq!(manifest.stages.len(), Stage::ALL.len());
    assert!(out.join(Artifacts::REPORT).is_file());
    assert!(out.join(Artifacts::GEXF).is_file());
}

#[test]
fn single_stage_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    assert!(echoscope(&["synth", "--out", "data"], dir.path()).status.success());
    let config = "data/echoscope.toml";
    let o = echoscope(&["ingest", "--config", config, "--out", "run"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("ingest"));
    let run = dir.path().join("run");
    assert!(run.join(Artifacts::NETWORK).is_file());

    let o = echoscope(
        &["detect", "--config", config, "--out", "run", "--min-community-size", "1000"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let m = Manifest::read(&run.join(Artifacts::MANIFEST)).unwrap();
    assert_eq!(m.stage(Stage::Detect).unwrap().counts["communities_kept"], 0);
    assert_eq!(m.seed, 7);

    let o = echoscope(&["ingest", "--config", config, "--out", "run2", "--seed", "99"], dir.path());
    assert!(o.status.success());
    assert_eq!(Manifest::read(&dir.path().join("run2").join(Artifacts::MANIFEST)).unwrap().seed, 99);
}

#[test]
fn failures_exit_nonzero_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let o = echoscope(&["ingest", "--edges", "missing.tsv", "--out", "o"], dir.path());
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("error: stage `ingest` failed"), "{err}");
    assert!(err.contains("missing.tsv"), "{err}");

    let o = echoscope(&["all", "--config", "nope.toml"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("nope.toml"));

    let o = echoscope(&["lda", "--out", "o", "--topics", "0"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("lda"));

    let o = echoscope(&["bogus"], dir.path());
    assert!(!o.status.success());
}
