use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gradnorm_al::experiment::{Summary, CYCLES_FILE};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gradnorm-al"))
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, body).unwrap();
    p
}

fn small(model: &str, strategies: &str, probes: &str, seeds: &str) -> String {
    format!(
        r#"{{
  "dataset": {{"kind": "gaussian_mixture", "classes": 3, "per_class": 60, "dim": 2, "separation": 3.0, "eval_count": 30}},
  "model": {model},
  "al": {{"cycles": 4, "budget": 10, "strategies": {strategies},
         "train": {{"epochs": 8, "batch_size": 16, "learning_rate": 0.05, "lr_decay": 0.1, "decay_epoch": 6, "momentum": 0.9, "weight_decay": 0.0005, "seed": 0}}}},
  "probes": {probes},
  "seeds": {seeds},
  "output_dir": "out"
}}"#
    )
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

#[test]
fn minimal_random_run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    config(dir.path(), &small(r#"{"kind": "logistic"}"#, r#"["random"]"#, "{}", "[0]"));
    let o = run_in(dir.path(), &["run", "--config", "config.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["cycles.csv", "selections.json", "summary.json", "manifest.json", "per_class.csv"] {
        assert!(dir.path().join("out").join(f).is_file(), "{f}");
    }
}

#[test]
fn invalid_strategy_exits_1_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    config(dir.path(), &small(r#"{"kind": "logistic"}"#, r#"["most-gradient"]"#, "{}", "[0]"));
    let o = run_in(dir.path(), &["run", "--config", "config.json"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("al.strategies"), "{}", stderr(&o));
    let o = run_in(dir.path(), &["run", "--config", "config.json", "--strategy", "random"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn unknown_key_and_missing_file_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let body = small(r#"{"kind": "logistic"}"#, r#"["random"]"#, "{}", "[0]").replace("\"seeds\"", "\"seeds_extra\": 1, \"seeds\"");
    config(dir.path(), &body);
    let o = run_in(dir.path(), &["run", "--config", "config.json"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("seeds_extra"), "{}", stderr(&o));
    let o = run_in(dir.path(), &["run", "--config", "nope.json"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn oversized_model_probe_exits_3_citing_the_cap() {
    let dir = tempfile::tempdir().unwrap();
    config(dir.path(), &small(r#"{"kind": "mlp", "hidden": [220, 220]}"#, r#"["entropy-gradnorm"]"#, "{}", "[0]"));
    let o = run_in(dir.path(), &["probe", "--config", "config.json", "--probe", "bounds"]);
    assert_eq!(code(&o), 3);
    let err = stderr(&o);
    assert!(err.contains("2000") && err.contains("49"), "{err}");
    assert!(!dir.path().join("out/probe_bounds.csv").exists());
}

#[test]
fn overlap_probe_has_one_row_per_selection() {
    let dir = tempfile::tempdir().unwrap();
    config(dir.path(), &small(r#"{"kind": "logistic"}"#, r#"["expected-gradnorm"]"#, "{}", "[0, 1]"));
    let o = run_in(dir.path(), &["probe", "--config", "config.json", "--probe", "overlap"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut r = csv::Reader::from_path(dir.path().join("out/probe_overlap.csv")).unwrap();
    let rows = r.records().count();
    assert_eq!(rows, 2 * 3, "C - 1 rows per seed");
    assert!(!dir.path().join("out").join(CYCLES_FILE).exists(), "probe must not write run artifacts");
}

#[test]
fn consistency_probe_fractions_are_in_unit_interval() {
    let dir = tempfile::tempdir().unwrap();
    config(dir.path(), &small(r#"{"kind": "logistic"}"#, r#"["entropy-gradnorm"]"#, "{}", "[3]"));
    let o = run_in(dir.path(), &["probe", "--config", "config.json", "--probe", "consistency"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut r = csv::Reader::from_path(dir.path().join("out/probe_consistency.csv")).unwrap();
    let col = r.headers().unwrap().iter().position(|h| h == "overlap_fraction").expect("column present");
    let mut n = 0;
    for rec in r.records() {
        let v: f64 = rec.unwrap()[col].parse().unwrap();
        assert!((0.0..=1.0).contains(&v));
        n += 1;
    }
    assert_eq!(n, 3);
}

#[test]
fn unknown_probe_name_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    config(dir.path(), &small(r#"{"kind": "logistic"}"#, r#"["random"]"#, "{}", "[0]"));
    let o = run_in(dir.path(), &["probe", "--config", "config.json", "--probe", "everything"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--probe"));
}

#[test]
fn summary_has_per_cycle_means_for_every_strategy() {
    let dir = tempfile::tempdir().unwrap();
    config(
        dir.path(),
        &small(r#"{"kind": "logistic"}"#, r#"["expected-gradnorm", "entropy-gradnorm", "random"]"#, r#"{"a2": true}"#, "[0, 1, 2]"),
    );
    let o = run_in(dir.path(), &["run", "--config", "config.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s: Summary = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(s.seeds, vec![0, 1, 2]);
    assert_eq!(s.strategies.len(), 3);
    for st in &s.strategies {
        assert_eq!(st.cycles.len(), 4);
        for c in &st.cycles {
            assert!((0.0..=1.0).contains(&c.test_acc.mean));
            assert!(c.test_acc.sd >= 0.0);
        }
        // a selection exists for every cycle but the last
        assert_eq!(st.cycles.iter().filter(|c| c.a2_fraction.is_some()).count(), if st.strategy.is_gradnorm() { 3 } else { 0 });
    }

    // three strategies over three seeds: mean curves with bands
    let o = run_in(dir.path(), &["plot", "--out", "out"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let svg = std::fs::read_to_string(dir.path().join("out/accuracy.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 3);
    assert_eq!(svg.matches("fill-opacity").count(), 3);
    assert_eq!(svg.matches("<circle").count(), 3 * 4);
    // same input, same bytes
    let o = run_in(dir.path(), &["plot", "--out", "out"]);
    assert_eq!(code(&o), 0);
    assert_eq!(svg, std::fs::read_to_string(dir.path().join("out/accuracy.svg")).unwrap());
}

#[test]
fn single_strategy_plot_has_one_curve_with_markers() {
    let dir = tempfile::tempdir().unwrap();
    config(dir.path(), &small(r#"{"kind": "logistic"}"#, r#"["random"]"#, r#"{"bounds": true}"#, "[5]"));
    assert_eq!(code(&run_in(dir.path(), &["run", "--config", "config.json"])), 0);
    let o = run_in(dir.path(), &["plot", "--out", "out"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let svg = std::fs::read_to_string(dir.path().join("out/accuracy.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 1);
    assert_eq!(svg.matches("<circle").count(), 4);
    assert!(!svg.contains("fill-opacity"), "one seed has no spread");
    assert!(svg.contains("<!-- data"));
    assert!(dir.path().join("out/bounds.svg").is_file());
}

#[test]
fn plot_refuses_missing_and_mixed_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("empty")).unwrap();
    let o = run_in(dir.path(), &["plot", "--out", "empty"]);
    assert_eq!(code(&o), 2);
    for f in ["manifest.json", "cycles.csv", "selections.json", "summary.json"] {
        assert!(stderr(&o).contains(f), "{}", stderr(&o));
    }

    config(dir.path(), &small(r#"{"kind": "logistic"}"#, r#"["entropy-gradnorm"]"#, "{}", "[0]"));
    assert_eq!(code(&run_in(dir.path(), &["run", "--config", "config.json"])), 0);
    // a probe run under another seed lands in the same directory
    let o = run_in(dir.path(), &["probe", "--config", "config.json", "--probe", "a2", "--seed", "9"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run_in(dir.path(), &["plot", "--out", "out"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("mixed"), "{}", stderr(&o));
}

#[test]
fn descent_probe_tracks_every_epoch() {
    let dir = tempfile::tempdir().unwrap();
    config(dir.path(), &small(r#"{"kind": "mlp", "hidden": [8]}"#, r#"["random"]"#, "{}", "[0, 1]"));
    let o = run_in(dir.path(), &["probe", "--config", "config.json", "--probe", "descent"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut r = csv::Reader::from_path(dir.path().join("out/probe_descent.csv")).unwrap();
    assert_eq!(r.records().count(), 2 * 8);
}

#[test]
fn check_passes() {
    let o = bin().arg("check").output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(String::from_utf8_lossy(&o.stdout).matches("PASS").count(), 5);
}
