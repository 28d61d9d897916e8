use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rrnet(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rrnet"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_data(dir: &Path) {
    let mut text = String::from("x1,x2,y\n");
    for i in 0..60 {
        let a = (i as f64 * 0.37).sin().abs();
        let b = (i as f64 * 0.11).cos().abs();
        let noise = if i % 7 == 0 { 10.0 } else { 0.05 * (i as f64).sin() };
        text.push_str(&format!("{a},{b},{}\n", 1.0 + 2.0 * a - b + noise));
    }
    fs::write(dir.join("data.csv"), text).unwrap();
}

const FAST: [&str; 4] = ["--epochs", "10", "--max-outer", "3"];

#[test]
fn train_writes_a_checkpoint_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    let mut args = vec!["train", "--data", "data.csv", "--out", "run", "--beta", "0.3"];
    args.extend(FAST);
    let out = rrnet(&args, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    for name in ["checkpoint.txt", "trace.csv", "fitted.csv", "metadata.json"] {
        assert!(dir.path().join("run").join(name).exists(), "{name}");
    }
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run/metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["command"], "train");
    assert_eq!(meta["beta"], 0.3);
    assert!(meta["argv"].as_array().unwrap().len() > 3);
}

#[test]
fn missing_data_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let out = rrnet(&["train", "--data", "absent.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("absent.csv"), "{}", stderr(&out));
}

#[test]
fn out_of_range_beta_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    let out = rrnet(&["train", "--data", "data.csv", "--beta", "1.5"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("[0, 1]"), "{}", stderr(&out));
}

#[test]
fn benchmark_writes_one_row_per_replication() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["benchmark", "--phi", "5", "--delta", "0.3", "--reps", "5", "--out", "bench"];
    args.extend(["--epochs", "5", "--max-outer", "2"]);
    let out = rrnet(&args, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let reps = fs::read_to_string(dir.path().join("bench/replications.csv")).unwrap();
    let lse = reps.lines().filter(|l| l.starts_with("lse,")).count();
    assert_eq!(lse, 5);
    assert_eq!(reps.lines().count(), 1 + 5 * 6);
    assert!(dir.path().join("bench/results.csv").exists());
    let meta = fs::read_to_string(dir.path().join("bench/metadata.json")).unwrap();
    assert!(meta.contains("\"base_seed\""));
    assert!(meta.contains("\"argv\""));
}

#[test]
fn benchmark_method_and_beta_lists() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "benchmark", "--phi", "phi1", "--reps", "1", "--methods", "lse,dpd", "--betas", "0.1,0.3", "--out", "b",
        "--epochs", "2", "--max-outer", "1",
    ];
    let out = rrnet(&args, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let results = fs::read_to_string(dir.path().join("b/results.csv")).unwrap();
    let mut labels: Vec<String> = results
        .lines()
        .skip(1)
        .map(|l| l.split(',').take(2).collect::<Vec<_>>().join(","))
        .collect();
    labels.dedup();
    assert_eq!(labels, vec!["lse,", "rrnet,0.1", "rrnet,0.3"]);
}

#[test]
fn unknown_target_function_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = rrnet(&["benchmark", "--phi", "phi9"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn influence_writes_curves_per_beta() {
    let dir = tempfile::tempdir().unwrap();
    let out = rrnet(
        &["influence", "--preset", "ex31", "--beta", "0,0.5", "--i", "2", "--out", "if"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let mut files: Vec<String> = fs::read_dir(dir.path().join("if"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    files.sort();
    assert_eq!(files, vec!["if_beta0.5.csv", "if_beta0.csv"]);
    let text = fs::read_to_string(dir.path().join("if/if_beta0.csv")).unwrap();
    assert!(text.starts_with("quantity,t,component,value\n"));
    // four theta components plus sigma and predictor at each of 401 points
    assert_eq!(text.lines().count(), 1 + 6 * 401);
    assert_eq!(text.lines().filter(|l| l.starts_with("sigma,")).count(), 401);
}

#[test]
fn influence_index_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let out = rrnet(&["influence", "--i", "49", "--curve", "theta", "--out", "a"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let out = rrnet(&["influence", "--i", "0", "--out", "b"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = rrnet(&["influence", "--i", "51", "--out", "b"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn relu_preset_writes_the_smoothing_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let out = rrnet(&["influence", "--preset", "ex32", "--beta", "0.5", "--out", "r"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("r/relu_limit_beta0.5.csv")).unwrap();
    assert!(text.starts_with("m,theta_gap,sigma_gap,predictor_gap\n"));
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    fs::write(dir.path().join("run.conf"), "# defaults\nbeta = 0.5\nmax_outer = 2\nepochs = 5\n").unwrap();
    let out = rrnet(
        &["train", "--config", "run.conf", "--data", "data.csv", "--beta", "0.2", "--out", "c"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("c/metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["beta"], 0.2);
    assert_eq!(meta["train"]["max_outer"], 2);
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    fs::write(dir.path().join("bad.conf"), "beta = 0.5\nlearning_speed = 3\n").unwrap();
    let out = rrnet(&["train", "--config", "bad.conf", "--data", "data.csv"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("learning-speed"), "{}", stderr(&out));
}

#[test]
fn cv_and_breakdown_run() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path());
    let mut args = vec!["cv", "--data", "data.csv", "--k", "3", "--betas", "0,0.5", "--out", "cv"];
    args.extend(FAST);
    let out = rrnet(&args, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let cv = fs::read_to_string(dir.path().join("cv/cv.csv")).unwrap();
    assert_eq!(cv.lines().count(), 3);

    let mut args = vec!["breakdown", "--deltas", "0,0.2", "--magnitudes", "1e4", "--betas", "0,0.5", "--out", "bd"];
    args.extend(FAST);
    let out = rrnet(&args, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let rows = fs::read_to_string(dir.path().join("bd/breakdown.csv")).unwrap();
    assert_eq!(rows.lines().count(), 5);
}
