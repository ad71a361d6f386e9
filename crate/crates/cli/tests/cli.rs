use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn yieldcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_yieldcast"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn synth(dir: &Path, law: &str, seed: &str) {
    let out = yieldcast(&["synth", "--law", law, "--seed", seed, "--out", path(dir)]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn quick_run(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "run",
        "--input",
        path(data),
        "--out",
        path(out),
        "--algorithms",
        "lasso",
        "--sets",
        "RS-",
        "--months",
        "8",
    ];
    args.extend_from_slice(extra);
    yieldcast(&args)
}

fn error_json(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("stderr has the error line");
    serde_json::from_str(line).expect("error is JSON")
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn synth_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    synth(&a, "METEO_MODULATED", "5");
    synth(&b, "METEO_MODULATED", "5");
    for f in ["timeseries.csv", "yields.csv", "units.csv", "truth.json"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
    assert!(read(&a.join("yields.csv")).starts_with("unit_id,crop,year,yield_t_ha\n"));
}

#[test]
fn run_writes_every_artifact() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    synth(&data, "PEAK_LINEAR", "1");
    let res = quick_run(&data, &out, &[]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    for f in [
        "phenology.csv",
        "predictions.csv",
        "metrics.csv",
        "comparison.csv",
        "summary.md",
        "run_manifest.json",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let preds = read(&out.join("predictions.csv"));
    assert!(preds.starts_with("crop,forecast_month,config_id,unit_id,year,y_obs,y_pred\n"));
    // 4 lasso configurations and 2 benchmarks, 5 units x 17 years each.
    assert_eq!(preds.lines().count(), 1 + 6 * 85);
    let metrics = read(&out.join("metrics.csv"));
    assert_eq!(metrics.lines().count(), 1 + 6);
    let comparison = read(&out.join("comparison.csv"));
    assert!(comparison.starts_with(
        "crop,forecast_month,model_a,model_b,p_smaller,p_equivalent,p_larger,verdict\n"
    ));
    // Rivals are the two benchmarks; lasso is the only ML algorithm.
    assert_eq!(comparison.lines().count(), 1 + 2);
    let manifest: serde_json::Value =
        serde_json::from_str(&read(&out.join("run_manifest.json"))).unwrap();
    assert_eq!(manifest["fold_plan"]["outer_folds"], 17);
    assert_eq!(manifest["fold_plan"]["inner_folds_per_outer"], 16);
    assert_eq!(manifest["grid_sizes"]["lasso"], 13);
    assert_eq!(manifest["season"]["sos"], 32);
    assert_eq!(manifest["season"]["eos"], 17);
    let best = manifest["best"]["8"].as_str().unwrap().to_string();
    assert!(read(&out.join("summary.md")).contains(&format!("Best configuration: `{best}`")));
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains(&format!("month 8: best {best}")));
}

#[test]
fn rerun_is_byte_identical_outside_timing() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "PEAK_LINEAR", "2");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(
        quick_run(&data, &a, &["--workers", "1", "--season", "32,17"])
            .status
            .success()
    );
    assert!(
        quick_run(&data, &b, &["--workers", "3", "--season", "32,17"])
            .status
            .success()
    );
    for f in [
        "predictions.csv",
        "metrics.csv",
        "comparison.csv",
        "summary.md",
    ] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
    let strip = |p: &Path| {
        let mut v: serde_json::Value = serde_json::from_str(&read(p)).unwrap();
        v.as_object_mut().unwrap().remove("timing");
        v
    };
    assert_eq!(
        strip(&a.join("run_manifest.json")),
        strip(&b.join("run_manifest.json"))
    );
}

#[test]
fn month_filter() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    synth(&data, "PEAK_LINEAR", "3");
    let res = yieldcast(&[
        "run",
        "--input",
        path(&data),
        "--out",
        path(&out),
        "--algorithms",
        "lasso",
        "--sets",
        "RS-",
        "--months",
        "6",
        "--no-benchmarks",
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let preds = read(&out.join("predictions.csv"));
    assert!(preds
        .lines()
        .skip(1)
        .all(|l| l.split(',').nth(1) == Some("6")));
    let metrics = read(&out.join("metrics.csv"));
    assert_eq!(metrics.lines().count(), 1 + 4);
}

#[test]
fn follow_up_commands() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    synth(&data, "METEO_MODULATED", "4");
    assert!(quick_run(&data, &out, &[]).status.success());
    let first = read(&out.join("comparison.csv"));

    let res = yieldcast(&["compare", "--input", path(&data), "--out", path(&out)]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    assert_eq!(read(&out.join("comparison.csv")), first);

    let res = yieldcast(&["report", "--out", path(&out)]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let ranks = read(&out.join("percentile_ranks.csv"));
    assert!(ranks.starts_with("crop,forecast_month,benchmark,rRMSEp,n_configs,percentile_rank\n"));
    assert_eq!(ranks.lines().count(), 1 + 2);
    assert!(out.join("effects_ohe.csv").is_file());
    assert!(out.join("effects_mrmr.csv").is_file());
    assert!(out.join("report.md").is_file());

    let res = yieldcast(&[
        "fit-final",
        "--input",
        path(&data),
        "--out",
        path(&out),
        "--months",
        "8",
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let model: serde_json::Value =
        serde_json::from_str(&read(&out.join("final_model_m8.json"))).unwrap();
    assert!(model["config_id"]
        .as_str()
        .unwrap()
        .starts_with("lasso|RS-|"));
}

#[test]
fn phenology_and_features() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    synth(&data, "PEAK_LINEAR", "6");
    let res = yieldcast(&["phenology", "--input", path(&data), "--out", path(&out)]);
    assert!(res.status.success());
    assert!(String::from_utf8_lossy(&res.stdout).contains("sos 32 eos 17"));
    assert!(read(&out.join("phenology.csv"))
        .starts_with("unit_id,harvest_year,sos_dekad,eos_dekad,fit_rmse\n"));

    let res = yieldcast(&[
        "features",
        "--input",
        path(&data),
        "--out",
        path(&out),
        "--sets",
        "RS",
        "--months",
        "3",
    ]);
    assert!(res.status.success());
    let header = read(&out.join("features.csv"))
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert_eq!(
        header,
        "unit_id,year,ND_Nov,ND_Dec,ND_Jan,ND_max_Nov,ND_max_Dec,ND_max_Jan,unit_U01,unit_U02,unit_U03,unit_U04,unit_U05,yield"
    );
}

#[test]
fn config_file_with_flag_override() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "PEAK_LINEAR", "7");
    let cfg = tmp.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "[inputs]\ndir = {:?}\n\n[run]\nalgorithms = [\"lasso\"]\nsets = [\"RS-\"]\nmonths = [8]\nmrmr = [false]\nohe = [true]\n\n[output]\nout = {:?}\n",
            path(&data),
            path(&tmp.path().join("from_file"))
        ),
    )
    .unwrap();
    let flagged = tmp.path().join("from_flag");
    let res = yieldcast(&["run", "--config", path(&cfg), "--out", path(&flagged)]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    assert!(!tmp.path().join("from_file").exists());
    let metrics = read(&flagged.join("metrics.csv"));
    assert!(metrics.contains("lasso|RS-|all|ohe"));
    assert_eq!(metrics.lines().count(), 1 + 1 + 2);
}

#[test]
fn missing_yields_exits_2() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "PEAK_LINEAR", "8");
    fs::remove_file(data.join("yields.csv")).unwrap();
    let res = quick_run(&data, &tmp.path().join("out"), &[]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(error_json(&res)["code"], "InputMissing");
}

#[test]
fn config_errors_exit_4() {
    let res = yieldcast(&["run", "--no-such-flag"]);
    assert_eq!(res.status.code(), Some(4));
    assert_eq!(error_json(&res)["code"], "ConfigError");

    let res = yieldcast(&["run", "--algorithms", "xgboost"]);
    assert_eq!(res.status.code(), Some(4));

    let res = yieldcast(&["run", "--months", "9"]);
    assert_eq!(res.status.code(), Some(4));

    let res = yieldcast(&["synth", "--years", "2", "--out", "/nonexistent/x"]);
    assert_eq!(res.status.code(), Some(4));
    assert_eq!(error_json(&res)["code"], "InfeasibleSpec");
}

#[test]
fn help_exits_0() {
    let res = yieldcast(&["--help"]);
    assert!(res.status.success());
    let text = String::from_utf8_lossy(&res.stdout);
    for sub in [
        "phenology",
        "features",
        "run",
        "compare",
        "report",
        "synth",
        "fit-final",
    ] {
        assert!(text.contains(sub), "{sub}");
    }
}
