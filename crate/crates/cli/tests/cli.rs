use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use thermal_muscle::controller::Ensemble;
use thermal_muscle::excitation::{power_levels, PowerSchedule};
use thermal_muscle::pipeline::Dataset;
use thermal_muscle::plant::ActuatorParams;

fn tmctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tmctl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = tmctl(args);
    assert!(
        out.status.success(),
        "tmctl {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&read(path)).unwrap()
}

/// Five levels, one hold variant and small networks.
const SMALL: &[&str] = &[
    "--seed",
    "11",
    "--holds",
    "20",
    "--set",
    "power_step=1",
    "--set",
    "hidden=8,8",
    "--epochs",
    "150",
];

fn small_data(dir: &Path) -> PathBuf {
    let out = dir.join("data");
    let mut args = vec!["gen-data", "--out", p(&out)];
    args.extend_from_slice(SMALL);
    ok(&args);
    out.join("dataset.csv")
}

fn small_bundle(dir: &Path, members: &str) -> PathBuf {
    let dataset = small_data(dir);
    let out = dir.join("train");
    let mut args = vec!["train", "--dataset", p(&dataset), "--out", p(&out), "--members", members];
    args.extend_from_slice(SMALL);
    ok(&args);
    out.join("bundle")
}

#[test]
fn gen_data_is_reproducible_and_labelled_from_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["gen-data", "--seed", "3", "--out", p(&a)]);
    ok(&["gen-data", "--seed", "3", "--out", p(&b)]);
    let bytes = read(a.join("dataset.csv"));
    assert_eq!(bytes, read(b.join("dataset.csv")));
    assert_eq!(read(a.join("manifest.json")), read(b.join("manifest.json")));

    let dataset = Dataset::from_csv(&bytes).unwrap();
    assert_eq!(dataset.to_csv(), bytes);
    let grid = power_levels(0.0, 4.0, 0.4).unwrap();
    assert!(dataset.samples.iter().all(|s| grid.contains(&s.target_power)));
    assert_eq!(dataset.len(), 3 * 121);

    let schedules: Vec<_> = std::fs::read_dir(a.join("schedules")).unwrap().collect();
    assert_eq!(schedules.len(), 3);
    for name in ["pairs_hold_20s", "pairs_hold_30s", "pairs_hold_40s"] {
        let text = read(a.join(format!("schedules/{name}.csv")));
        assert_eq!(PowerSchedule::from_csv(&text).unwrap().to_csv(), text);
        assert!(a.join(format!("traces/{name}.csv")).exists());
    }
    let params = read(a.join("params.txt"));
    assert_eq!(ActuatorParams::from_text(&params).unwrap().to_text(), params);
    assert_eq!(read(a.join("tau_summary.csv")).lines().count(), 2);
    assert_eq!(read(a.join("tau_segments.csv")).lines().count(), 1 + 363);

    let manifest = json(a.join("manifest.json"));
    assert_eq!(manifest["command"], "gen-data");
    assert_eq!(manifest["seed"], 3);
    let artifacts = manifest["artifacts"].as_object().unwrap();
    assert!(artifacts.contains_key("dataset.csv"));
    assert!(artifacts.contains_key("config.txt"));
    let c = ok(&["gen-data", "--seed", "4", "--out", p(&dir.path().join("c"))]);
    assert!(c.status.success());
    assert_ne!(bytes, read(dir.path().join("c/dataset.csv")));
}

#[test]
fn holds_flag_sets_the_schedule_count() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["gen-data", "--seed", "1", "--holds", "20,30", "--out", p(dir.path())]);
    assert_eq!(std::fs::read_dir(dir.path().join("schedules")).unwrap().count(), 2);
}

#[test]
fn missing_seed_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = tmctl(&["gen-data", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn unknown_flags_and_keys_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(tmctl(&["gen-data", "--bogus"]).status.code(), Some(1));
    let out = tmctl(&["gen-data", "--seed", "1", "--set", "colour=red", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.txt");
    std::fs::write(&cfg, "seed = 5\nholds = 20,40\nfps = 15\n").unwrap();
    let out = dir.path().join("out");
    ok(&["gen-data", "--config", p(&cfg), "--seed", "6", "--out", p(&out)]);
    let written = read(out.join("config.txt"));
    assert!(written.contains("seed = 6\n"));
    assert!(written.contains("holds = 20,40\n"));
    assert!(written.contains("fps = 15\n"));
    assert!(written.contains("members = 20\n"));
    assert_eq!(std::fs::read_dir(out.join("schedules")).unwrap().count(), 2);

    let again = dir.path().join("again");
    ok(&["gen-data", "--config", p(&out.join("config.txt")), "--out", p(&again)]);
    assert_eq!(read(again.join("dataset.csv")), read(out.join("dataset.csv")));
}

#[test]
fn train_writes_members_losses_and_lambdas() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = small_bundle(dir.path(), "3");
    let ens = Ensemble::load(&bundle).unwrap();
    assert_eq!(ens.members.len(), 3);
    assert!(ens.members.iter().all(|m| m.lambda >= 1e-8));
    for k in 0..3 {
        assert!(bundle.join(format!("member_{k:02}.txt")).exists());
        let losses = read(dir.path().join(format!("train/losses/member_{k:02}.csv")));
        assert_eq!(losses.lines().count(), 151);
    }
    let manifest = read(bundle.join("bundle.txt"));
    assert_eq!(manifest.lines().filter(|l| l.contains(".lambda =")).count(), 3);

    let copy = dir.path().join("copy");
    ens.save(&copy).unwrap();
    assert_eq!(read(copy.join("bundle.txt")), manifest);
    assert_eq!(read(copy.join("member_01.txt")), read(bundle.join("member_01.txt")));
}

#[test]
fn single_member_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = small_bundle(dir.path(), "1");
    assert_eq!(Ensemble::load(&bundle).unwrap().members.len(), 1);
    let out = ok(&["predict", "--bundle", p(&bundle), "--di", "2", "--df", "5", "--tau", "6", "--duration", "20"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["std_power_w"], 0.0);
    assert_eq!(v["member_powers_w"].as_array().unwrap().len(), 1);
}

#[test]
fn corrupted_dataset_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = small_data(dir.path());
    let mut text = read(&dataset);
    text.truncate(text.len() / 2);
    text.push_str("garbage\n");
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, text).unwrap();

    let out = tmctl(&["train", "--seed", "1", "--dataset", p(&bad), "--out", p(&dir.path().join("t"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("parse"));

    let out = tmctl(&["eval", "--seed", "1", "--dataset", p(&bad), "--out", p(&dir.path().join("e"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("parse"));

    let missing = tmctl(&["train", "--seed", "1", "--dataset", "/nonexistent.csv", "--out", p(&dir.path().join("m"))]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn diverging_training_names_the_member() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = small_data(dir.path());
    let out = tmctl(&[
        "train",
        "--seed",
        "1",
        "--dataset",
        p(&dataset),
        "--out",
        p(&dir.path().join("t")),
        "--members",
        "2",
        "--epochs",
        "50",
        "--set",
        "lr_init=1e300",
        "--set",
        "hidden=8",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ensemble member"));
}

#[test]
fn control_writes_five_repeats_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = small_bundle(dir.path(), "2");
    let run = |name: &str| {
        let out = dir.path().join(name);
        let mut args = vec![
            "control", "--bundle", p(&bundle), "--di", "3", "--df", "8", "--tau", "6", "--duration", "20",
            "--repeats", "5", "--out", p(&out),
        ];
        args.extend_from_slice(&SMALL[..2]);
        let o = ok(&args);
        (out, String::from_utf8_lossy(&o.stdout).into_owned())
    };
    let (a, stdout) = run("a");
    assert!(stdout.contains("ensemble inference:"));
    for k in 1..=5 {
        assert!(read(a.join(format!("repeat_{k}.csv"))).starts_with("time_s,desired_mm,measured_mm\n"));
    }
    assert!(!a.join("repeat_6.csv").exists());
    let overlay = read(a.join("overlay.svg"));
    assert_eq!(overlay.matches("<polyline").count(), 6);
    assert_eq!(overlay.matches("<polyline fill=\"none\" stroke=\"#000000\"").count(), 1);
    assert_eq!(overlay.matches("stroke-dasharray").count(), 2 * 5);
    let members = read(a.join("members.svg"));
    assert!(members.matches("<circle").count() >= 2);
    let summary = json(a.join("summary.json"));
    assert_eq!(summary["repeats"].as_array().unwrap().len(), 5);
    assert!(summary["rms_error_mm"].as_f64().unwrap().is_finite());
    assert!(read(a.join("summary.txt")).contains("ensemble inference:"));
    assert!(json(a.join("timing.json"))["inference_ms"].as_f64().unwrap() > 0.0);

    let (b, _) = run("b");
    for file in ["summary.json", "overlay.svg", "members.svg", "repeat_3.csv", "mean.csv", "manifest.json"] {
        assert_eq!(read(a.join(file)), read(b.join(file)), "{file}");
    }
}

#[test]
fn requests_outside_the_envelope_warn_but_still_predict() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("data");
    ok(&["gen-data", "--seed", "2", "--holds", "20", "--set", "power_max=1.5", "--set", "power_step=0.5", "--out", p(&dataset)]);
    let train = dir.path().join("train");
    ok(&[
        "train", "--seed", "2", "--dataset", p(&dataset.join("dataset.csv")), "--out", p(&train), "--members", "2",
        "--epochs", "20", "--set", "hidden=4",
    ]);
    let out = ok(&[
        "predict", "--bundle", p(&train.join("bundle")), "--di", "15", "--df", "19", "--tau", "5", "--duration", "20",
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("outside the training envelope"));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["extrapolated"], true);
    assert!(v["mean_power_w"].as_f64().unwrap().is_finite());
}

#[test]
fn invalid_requests_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = small_bundle(dir.path(), "1");
    let out = tmctl(&["predict", "--bundle", p(&bundle), "--di", "2", "--df", "25", "--tau", "5", "--duration", "20"]);
    assert_eq!(out.status.code(), Some(1));
    let out = tmctl(&["predict", "--bundle", p(&dir.path().join("none")), "--di", "2", "--df", "5", "--tau", "5", "--duration", "20"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn plot_charts_csv_columns() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("loss.csv");
    std::fs::write(&csv, "epoch,train_loss,val_loss\n0,1,2\n1,0.5,1.5\n2,0.25,1.2\n").unwrap();
    let svg = dir.path().join("plots/loss.svg");
    ok(&["plot", "--input", p(&csv), "--out", p(&svg)]);
    let text = read(&svg);
    assert_eq!(text.matches("<polyline").count(), 2);
    assert!(text.contains("val_loss"));
    let again = dir.path().join("again.svg");
    ok(&["plot", "--input", p(&csv), "--out", p(&again)]);
    assert_eq!(read(&again), text);
    assert_eq!(tmctl(&["plot", "--input", p(&dir.path().join("x.csv")), "--out", p(&again)]).status.code(), Some(2));
}
