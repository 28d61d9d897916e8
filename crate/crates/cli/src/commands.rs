use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rrnet::benchmarks::{
    breakdown_csv, breakdown_stress, gen_dataset, kfold_cv, load_csv, run_replications, train_config_json,
    BreakdownConfig, DgpSpec, Method, ResponseColumn, RunOptions, ScalePolicy, Scaling, GENERATOR_NAME,
};
use rrnet::influence::{if_relu_limit, linspace, DEFAULT_SHARPNESS};
use rrnet::{fit, predict, Activation, DpdConfig, IfSetup, Influence, NetworkSpec, TrainConfig};
use serde_json::{json, Value};

use crate::error::CliError;
use crate::{BenchmarkArgs, BreakdownArgs, Curve, CvArgs, InfluenceArgs, Optim, Preset, TrainArgs};

/// How a command finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Complete,
    /// Some cells failed; a failure manifest was written.
    Partial,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// `linear`, `widths:activation` or a full `p;widths;activation` descriptor.
pub fn parse_arch(text: &str, input_dim: usize) -> Result<NetworkSpec, CliError> {
    let text = text.trim();
    if text.is_empty() || text.eq_ignore_ascii_case("linear") {
        return Ok(NetworkSpec::linear(input_dim)?);
    }
    if text.contains(';') {
        let spec: NetworkSpec = text.parse()?;
        if spec.input_dim() != input_dim {
            return Err(usage(format!(
                "architecture `{text}` expects {} inputs but the data has {input_dim}",
                spec.input_dim()
            )));
        }
        return Ok(spec);
    }
    let (widths, act) = text
        .split_once(':')
        .ok_or_else(|| usage(format!("architecture `{text}` must look like `10:sigmoid` or `linear`")))?;
    let widths = widths
        .split(',')
        .map(|w| w.trim().parse::<usize>().map_err(|_| usage(format!("bad layer width `{w}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    let act: Activation = act.parse()?;
    Ok(NetworkSpec::uniform(input_dim, &widths, act)?)
}

fn parse_list(name: &str, text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| usage(format!("--{name}: `{s}` is not a number"))))
        .collect()
}

fn response_column(text: &str) -> ResponseColumn {
    match text.trim() {
        "last" => ResponseColumn::Last,
        t => t
            .parse::<usize>()
            .map(ResponseColumn::Index)
            .unwrap_or_else(|_| ResponseColumn::Name(t.to_string())),
    }
}

fn train_config(o: &Optim) -> Result<TrainConfig, CliError> {
    let cfg = TrainConfig {
        epochs_per_outer: o.epochs,
        batch_size: o.batch_size,
        learning_rate: o.learning_rate,
        max_outer: o.max_outer,
        tolerance: o.tolerance,
        sigma_solver: o.sigma_solver,
        seed: o.seed,
        ..TrainConfig::default()
    };
    let cfg = if o.full_batch { cfg.full_batch() } else { cfg };
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write(dir: &Path, name: &str, body: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| CliError::io(&path, e))
}

/// Writes `metadata.json`: the resolved command line plus `extra`.
fn write_metadata(dir: &Path, command: &str, argv: &[String], extra: Value) -> Result<(), CliError> {
    let mut meta = json!({
        "command": command,
        "argv": argv,
        "version": env!("CARGO_PKG_VERSION"),
        "generator": GENERATOR_NAME,
    });
    if let (Some(m), Value::Object(e)) = (meta.as_object_mut(), extra) {
        m.extend(e);
    }
    write(dir, "metadata.json", &format!("{meta:#}\n"))
}

fn scaling_json(s: &Scaling) -> Value {
    json!({
        "response": s.response_name,
        "covariates": s.covariates.iter().map(|c| json!({"name": c.name, "min": c.min, "range": c.range})).collect::<Vec<_>>(),
        "response_scale": s.response.as_ref().map(|c| json!({"min": c.min, "range": c.range})),
    })
}

pub fn train(a: &TrainArgs, argv: &[String]) -> Result<Status, CliError> {
    let dpd = DpdConfig::new(a.beta, a.model)?;
    let train_cfg = train_config(&a.optim)?;
    let (data, scaling) = load_csv(
        &a.data.data,
        &response_column(&a.data.response),
        ScalePolicy {
            scale_response: a.data.scale_response,
        },
    )?;
    let spec = parse_arch(&a.arch, data.dim())?;
    let result = fit(&dpd, &spec, &data, &train_cfg)?;

    let out = &a.common.out;
    create_dir(out)?;
    let checkpoint = out.join("checkpoint.txt");
    spec.write_checkpoint(&result.theta, &checkpoint)?;
    result.write_trace_csv(&out.join("trace.csv"))?;
    let fitted = predict(&spec, &result.theta, data.xs())?;
    let mut table = String::from("row,y,fitted,residual\n");
    for (i, (y, f)) in data.ys().iter().zip(&fitted).enumerate() {
        let _ = writeln!(table, "{i},{y:e},{f:e},{:e}", y - f);
    }
    write(out, "fitted.csv", &table)?;
    let sigma = result.sigma.unwrap_or(f64::NAN);
    write_metadata(
        out,
        "train",
        argv,
        json!({
            "data": a.data.data,
            "beta": a.beta,
            "model": a.model.to_string(),
            "architecture": spec.to_string(),
            "train": train_config_json(&train_cfg),
            "scaling": scaling_json(&scaling),
            "sigma": sigma,
            "final_loss": result.final_loss(),
            "outer_iters": result.outer_iters,
            "descent_violations": result.descent_violations,
        }),
    )?;
    println!(
        "beta={} sigma={sigma:.6e} loss={:.6e} outer_iters={} checkpoint={}",
        a.beta,
        result.final_loss(),
        result.outer_iters,
        checkpoint.display()
    );
    Ok(Status::Complete)
}

pub fn benchmark(a: &BenchmarkArgs, argv: &[String]) -> Result<Status, CliError> {
    let betas = parse_list("betas", &a.betas)?;
    let methods = Method::parse_list(&a.methods, &betas, a.model)?;
    let train_cfg = train_config(&a.optim)?;
    let mut dgp = DgpSpec::new(a.phi, a.delta, a.optim.seed);
    if let Some(n) = a.n {
        dgp.n = n;
    }
    if let Some(sigma) = a.sigma {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(usage(format!("--sigma must be positive, got {sigma}")));
        }
        dgp.sigma = sigma;
    }
    let spec = a
        .arch
        .as_deref()
        .map(|s| parse_arch(s, a.phi.input_dim()))
        .transpose()?;
    let opts = RunOptions {
        spec,
        ..RunOptions::new(a.reps, train_cfg)
    };
    let report = run_replications(&dgp, &methods, &opts)?;

    let out = &a.common.out;
    report.write(out)?;
    write_metadata(out, "benchmark", argv, report.metadata())?;
    print!("{}", report.results_csv());
    if report.is_complete() {
        return Ok(Status::Complete);
    }
    let mut manifest = String::from("method,beta,replication,seed,message\n");
    for f in &report.failures {
        let _ = writeln!(
            manifest,
            "{},{},{},{},\"{}\"",
            f.method.label(),
            f.method.beta().map(|b| b.to_string()).unwrap_or_default(),
            f.replication,
            dgp.seed.wrapping_add(f.replication as u64),
            f.message.replace('"', "'")
        );
    }
    write(out, "failures.csv", &manifest)?;
    eprintln!("{} of {} cells failed; see failures.csv", report.failures.len(), a.reps * methods.len());
    Ok(Status::Partial)
}

/// `lo:hi:count`.
fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    let bad = || usage(format!("--tgrid `{text}` must be `lo:hi:count` with lo < hi and count >= 2"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let count: usize = parts[2].parse().map_err(|_| bad())?;
    if !(lo < hi) || count < 2 {
        return Err(bad());
    }
    Ok(linspace(lo, hi, count))
}

pub fn influence(a: &InfluenceArgs, argv: &[String]) -> Result<Status, CliError> {
    let betas = parse_list("beta", &a.beta)?;
    if betas.is_empty() {
        return Err(usage("--beta needs at least one value"));
    }
    let out = &a.common.out;
    create_dir(out)?;
    let mut summary = Vec::new();
    for &beta in &betas {
        let setup = match a.preset {
            Preset::Ex31 => IfSetup::sigmoid_example(beta, a.i)?,
            Preset::Ex32 => IfSetup::relu_example(beta, a.i)?,
        }
        .with_pinv_tol(a.pinv_tol);
        let inf = Influence::new(setup.clone())?;
        let mu = inf.mu_i();
        let grid = match &a.tgrid {
            Some(g) => parse_grid(g)?,
            None => linspace(mu - 2.0, mu + 2.0, 401),
        };
        let x = a.x.map_or_else(|| setup.x(a.i - 1).to_vec(), |v| vec![v]);
        let mut ges = serde_json::Map::new();
        let mut curves = Vec::new();
        let wants = |c: Curve| a.curve == Curve::All || a.curve == c;
        if wants(Curve::Theta) {
            curves.push(("theta", inf.theta_curve(&grid)?));
        }
        if wants(Curve::Sigma) {
            curves.push(("sigma", inf.sigma_curve(&grid)?));
        }
        if wants(Curve::Predictor) {
            curves.push(("predictor", inf.predictor_curve(&grid, &x)?));
            let (admissible, residual) = inf.admissible_check(&x)?;
            ges.insert("x_admissible".into(), json!(admissible));
            ges.insert("x_residual".into(), json!(residual));
        }
        let mut table = String::from("quantity,t,component,value\n");
        for (name, curve) in &curves {
            ges.insert((*name).into(), json!(curve.gross_error_sensitivity()));
            for (t, v) in curve.t.iter().zip(&curve.values) {
                for (c, value) in v.iter().enumerate() {
                    let _ = writeln!(table, "{name},{t:.17e},{c},{value:.17e}");
                }
            }
        }
        write(out, &format!("if_beta{beta}.csv"), &table)?;
        if a.preset == Preset::Ex32 && a.curve == Curve::All {
            let limit = if_relu_limit(&setup, &grid, &x, &DEFAULT_SHARPNESS)?;
            let mut table = String::from("m,theta_gap,sigma_gap,predictor_gap\n");
            for g in &limit.gaps {
                let _ = writeln!(table, "{},{:e},{:e},{:e}", g.m, g.theta, g.sigma, g.predictor);
            }
            write(out, &format!("relu_limit_beta{beta}.csv"), &table)?;
        }
        summary.push(json!({
            "beta": beta,
            "mu_i": mu,
            "x": x,
            "jacobian_rank": inf.rank(),
            "gross_error_sensitivity": ges,
        }));
    }
    write_metadata(
        out,
        "influence",
        argv,
        json!({
            "preset": format!("{:?}", a.preset).to_lowercase(),
            "index": a.i,
            "pinv_tol": a.pinv_tol,
            "curves": summary,
        }),
    )?;
    println!("wrote influence curves for {} beta value(s) to {}", betas.len(), out.display());
    Ok(Status::Complete)
}

pub fn breakdown(a: &BreakdownArgs, argv: &[String]) -> Result<Status, CliError> {
    let train_cfg = train_config(&a.optim)?;
    let (base, source) = match &a.data {
        Some(path) => (
            load_csv(path, &response_column(&a.response), ScalePolicy::default())?.0,
            json!({ "data": path }),
        ),
        None => (
            gen_dataset(&DgpSpec::new(a.phi, 0.0, a.optim.seed))?.0,
            json!({ "function": a.phi.to_string() }),
        ),
    };
    let spec = match (&a.arch, &a.data) {
        (Some(s), _) => parse_arch(s, base.dim())?,
        (None, None) => a.phi.architecture(),
        (None, Some(_)) => parse_arch("10:sigmoid", base.dim())?,
    };
    let cfg = BreakdownConfig {
        deltas: parse_list("deltas", &a.deltas)?,
        magnitudes: parse_list("magnitudes", &a.magnitudes)?,
        betas: parse_list("betas", &a.betas)?,
        model: a.model,
        seed: a.optim.seed,
        train_cfg: train_cfg.clone(),
    };
    let rows = breakdown_stress(&spec, &base, &cfg)?;
    let out = &a.common.out;
    create_dir(out)?;
    let table = breakdown_csv(&rows);
    write(out, "breakdown.csv", &table)?;
    write_metadata(
        out,
        "breakdown",
        argv,
        json!({
            "base": source,
            "architecture": spec.to_string(),
            "model": a.model.to_string(),
            "seed": a.optim.seed,
            "train": train_config_json(&train_cfg),
        }),
    )?;
    print!("{table}");
    Ok(Status::Complete)
}

pub fn cv(a: &CvArgs, argv: &[String]) -> Result<Status, CliError> {
    let betas = parse_list("betas", &a.betas)?;
    let methods = Method::parse_list(&a.methods, &betas, a.model)?;
    let train_cfg = train_config(&a.optim)?;
    let (data, scaling) = load_csv(
        &a.data.data,
        &response_column(&a.data.response),
        ScalePolicy {
            scale_response: a.data.scale_response,
        },
    )?;
    let spec = parse_arch(&a.arch, data.dim())?;
    let report = kfold_cv(&data, a.k, &methods, a.trim, &spec, &train_cfg)?;

    let out = &a.common.out;
    create_dir(out)?;
    let table = report.to_csv();
    write(out, "cv.csv", &table)?;
    let mut folds = String::from("method,beta,fold,tmse\n");
    for (m, scores) in report.methods.iter().zip(&report.fold_tmse) {
        for (f, s) in scores.iter().enumerate() {
            let beta = m.beta().map(|b| b.to_string()).unwrap_or_default();
            let _ = writeln!(folds, "{},{beta},{f},{s:e}", m.label());
        }
    }
    write(out, "cv_folds.csv", &folds)?;
    write_metadata(
        out,
        "cv",
        argv,
        json!({
            "data": a.data.data,
            "architecture": spec.to_string(),
            "k": a.k,
            "trim": a.trim,
            "fold_seed": train_cfg.seed,
            "train": train_config_json(&train_cfg),
            "scaling": scaling_json(&scaling),
        }),
    )?;
    print!("{table}");
    Ok(Status::Complete)
}
