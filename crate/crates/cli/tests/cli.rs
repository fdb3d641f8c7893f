//! End-to-end runs of the `floodcast` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use floodcast_cli::forecast::parse_metrics;
use floodcast_cli::plot::series_values;
use floodcast_cli::{parse_readings, write_readings};
use floodcast_core::Reading;
use tempfile::TempDir;

fn repo(path: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(path)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_floodcast")).args(args).output().unwrap()
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let mut full: Vec<&str> = args.to_vec();
    full.extend(["--out-dir", dir.to_str().unwrap()]);
    run(&full)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_csv(dir: &TempDir, name: &str, readings: &[Reading]) -> PathBuf {
    let path = dir.path().join(name);
    let mut buf = Vec::new();
    write_readings(&mut buf, readings).unwrap();
    fs::write(&path, buf).unwrap();
    path
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["forecast", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["forecast"]).status.code(), Some(1));
    assert_eq!(run(&["fit", "--input", "x.csv", "--weight-fn", "nope"]).status.code(), Some(1));
}

#[test]
fn missing_input_exits_one() {
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), &["forecast", "--input", "/definitely/not/here.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("here.csv"));
}

#[test]
fn malformed_csv_names_the_line() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "t_min,level_m,rainfall_mmhr,discharge_m3s\n0,1,2,3\n30,abc,2,3\n").unwrap();
    let out = run_in(dir.path(), &["forecast", "--input", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn constant_input_exits_zero_with_artifacts() {
    let dir = TempDir::new().unwrap();
    let readings: Vec<Reading> = (0..20).map(|i| Reading::new(30.0 * i as f64, 6.0, 3.0, 80.0)).collect();
    let input = write_csv(&dir, "flat.csv", &readings);
    let out_dir = dir.path().join("out");
    let out = run_in(&out_dir, &["forecast", "--input", input.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    for name in ["predictions.csv", "errors.csv", "alarms.csv", "metrics.txt", "levels.svg", "errors.svg"] {
        assert!(out_dir.join(name).exists(), "{name} missing");
    }
    let metrics = parse_metrics(&fs::read_to_string(out_dir.join("metrics.txt")).unwrap());
    assert_eq!(metrics["alarms"], "0");
    assert_eq!(metrics["readings"], "20");
}

#[test]
fn reproduction_forecast_alarms_and_plots_match_csv() {
    let dir = TempDir::new().unwrap();
    let input = repo("data/reproduction.csv");
    let history = repo("data/reproduction_history.csv");
    let out = run_in(
        dir.path(),
        &["forecast", "--input", input.to_str().unwrap(), "--history", history.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let metrics = parse_metrics(&fs::read_to_string(dir.path().join("metrics.txt")).unwrap());
    assert_eq!(metrics["alarms"], "1");
    assert_eq!(metrics["readings"], "15");

    let live = parse_readings(fs::File::open(&input).unwrap()).unwrap().readings;
    let svg = fs::read_to_string(dir.path().join("levels.svg")).unwrap();
    let plotted = series_values(&svg, "observed").unwrap();
    assert_eq!(plotted.len(), live.len());
    for (p, r) in plotted.iter().zip(&live) {
        assert!((p - r.level).abs() < 1e-6);
    }
    let alarms = fs::read_to_string(dir.path().join("alarms.csv")).unwrap();
    assert_eq!(alarms.lines().count(), 2);
}

#[test]
fn report_recomputes_forecast_metrics() {
    let dir = TempDir::new().unwrap();
    let input = repo("data/reproduction.csv");
    let history = repo("data/reproduction_history.csv");
    let first = dir.path().join("forecast");
    run_in(
        &first,
        &["forecast", "--input", input.to_str().unwrap(), "--history", history.to_str().unwrap()],
    );
    let second = dir.path().join("report");
    let predictions = first.join("predictions.csv");
    let out = run_in(&second, &["report", "--input", predictions.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let a = parse_metrics(&fs::read_to_string(first.join("metrics.txt")).unwrap());
    let b = parse_metrics(&fs::read_to_string(second.join("metrics.txt")).unwrap());
    for key in ["predictions", "alarms", "first_alarm_t_min"] {
        assert_eq!(a[key], b[key], "{key}");
    }
    let close = |k: &str| (a[k].parse::<f64>().unwrap() - b[k].parse::<f64>().unwrap()).abs() < 1e-5;
    assert!(close("mean_error_pct") && close("max_error_pct") && close("wrms_error_pct"));
}

#[test]
fn fit_recovers_the_history_model() {
    let dir = TempDir::new().unwrap();
    let input = repo("data/reproduction_history.csv");
    let out = run_in(dir.path(), &["fit", "--input", input.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let fit = parse_metrics(&fs::read_to_string(dir.path().join("fit.txt")).unwrap());
    let coef = |k: &str| fit[k].parse::<f64>().unwrap();
    assert!((coef("coef_rainfall_mmhr") - 0.35).abs() < 0.02, "{fit:?}");
    assert!((coef("coef_discharge_m3s") - 0.012).abs() < 0.002, "{fit:?}");
    assert!(fit["downweighted_rows"].parse::<usize>().unwrap() >= 2);
}

#[test]
fn ingestion_round_trips_exactly() {
    let readings = vec![
        Reading::new(0.0, 1.0 / 3.0, 0.1, 250.0).with_extra("snowmelt", 1e-7),
        Reading::new(12.5, 17.892394051620844, 35.42857142857143, 300.0).with_extra("snowmelt", 2.0),
    ];
    let mut buf = Vec::new();
    write_readings(&mut buf, &readings).unwrap();
    let back = parse_readings(buf.as_slice()).unwrap();
    assert_eq!(back.readings, readings);
    assert_eq!(back.extra_names(), ["snowmelt"]);
}

#[test]
fn simulate_matches_golden_trace() {
    let dir = TempDir::new().unwrap();
    let scenario = repo("scenarios/demo.toml");
    let out = run_in(dir.path(), &["simulate", "--scenario", scenario.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let got = fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
    let want = fs::read_to_string(repo("scenarios/demo.trace.jsonl")).unwrap();
    assert!(got == want, "trace differs from scenarios/demo.trace.jsonl");
    for name in ["energy.csv", "alarms.csv", "summary.txt"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
}

#[test]
fn simulate_runs_one_directory_per_seed() {
    let dir = TempDir::new().unwrap();
    let scenario = repo("scenarios/single_zone_rise.toml");
    let out = run_in(dir.path(), &["simulate", "--scenario", scenario.to_str().unwrap(), "--seeds", "1,2,3"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    for seed in 1..=3 {
        let summary = fs::read_to_string(dir.path().join(format!("seed-{seed}/summary.txt"))).unwrap();
        assert_eq!(parse_metrics(&summary)["alarms"], "1");
    }
}

#[test]
fn coverage_gap_names_the_path() {
    let dir = TempDir::new().unwrap();
    let text = fs::read_to_string(repo("scenarios/single_zone_rise.toml")).unwrap();
    let shortened = text.replace("horizon_min = 600.0", "horizon_min = 900.0");
    assert_ne!(shortened, text);
    let path = dir.path().join("gap.toml");
    fs::write(&path, shortened).unwrap();
    let out = run_in(dir.path(), &["simulate", "--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("zones[0].samples"), "{}", stderr(&out));
}

#[test]
fn overrides_reach_the_predictor() {
    let dir = TempDir::new().unwrap();
    let input = repo("data/reproduction.csv");
    let history = repo("data/reproduction_history.csv");
    // a flood line far above the data raises no alarm
    let out = run_in(
        dir.path(),
        &[
            "forecast",
            "--input",
            input.to_str().unwrap(),
            "--history",
            history.to_str().unwrap(),
            "--flood-line",
            "100",
            "--threshold",
            "90",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let bad = run_in(dir.path(), &["forecast", "--input", input.to_str().unwrap(), "--capacity", "2"]);
    assert_eq!(bad.status.code(), Some(1));
}
