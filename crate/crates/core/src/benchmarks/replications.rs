use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Value};

use super::dgp::{gen_dataset, DgpSpec, GENERATOR_NAME};
use super::{beta_cell, Method};
use crate::error::{Error, Result};
use crate::nn::NetworkSpec;
use crate::trainer::{predict, TrainConfig};

fn check_lengths(ys: &[f64], fitted: &[f64]) -> Result<()> {
    if ys.len() != fitted.len() {
        return Err(Error::Dimension {
            layer: "fitted values".into(),
            expected: ys.len(),
            actual: fitted.len(),
        });
    }
    if ys.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

pub fn mse(ys: &[f64], fitted: &[f64]) -> Result<f64> {
    check_lengths(ys, fitted)?;
    Ok(ys.iter().zip(fitted).map(|(y, f)| (y - f).powi(2)).sum::<f64>() / ys.len() as f64)
}

/// Mean of the `ceil((1 - trim) n)` smallest squared errors.
pub fn tmse(ys: &[f64], fitted: &[f64], trim: f64) -> Result<f64> {
    check_lengths(ys, fitted)?;
    if !(0.0..1.0).contains(&trim) {
        return Err(Error::Config(format!("trimming fraction must lie in [0, 1), got {trim}")));
    }
    let n = ys.len();
    // guard against 0.8 * 10 landing just above 8
    let keep = (((1.0 - trim) * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    let mut sq: Vec<f64> = ys.iter().zip(fitted).map(|(y, f)| (y - f).powi(2)).collect();
    sq.sort_by(f64::total_cmp);
    Ok(sq[..keep].iter().sum::<f64>() / keep as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    /// Training TMSE trimmed at the contamination fraction.
    TrainTmse,
    /// MSE on the clean test sample.
    TestMse,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::TrainTmse, Metric::TestMse];

    pub fn name(self) -> &'static str {
        match self {
            Metric::TrainTmse => "train_tmse",
            Metric::TestMse => "test_mse",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(count)`; NaN below two values.
    pub stderr: f64,
    pub count: usize,
}

fn summarize(values: &[Option<f64>]) -> MetricSummary {
    let ok: Vec<f64> = values.iter().flatten().copied().collect();
    let count = ok.len();
    if count == 0 {
        return MetricSummary {
            mean: f64::NAN,
            stderr: f64::NAN,
            count,
        };
    }
    let mean = ok.iter().sum::<f64>() / count as f64;
    let stderr = if count < 2 {
        f64::NAN
    } else {
        let var = ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
        (var / count as f64).sqrt()
    };
    MetricSummary { mean, stderr, count }
}

/// Per-replication metrics of one method; `None` marks a failed cell.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodReport {
    pub method: Method,
    pub train_tmse: Vec<Option<f64>>,
    pub test_mse: Vec<Option<f64>>,
}

impl MethodReport {
    pub fn values(&self, metric: Metric) -> &[Option<f64>] {
        match metric {
            Metric::TrainTmse => &self.train_tmse,
            Metric::TestMse => &self.test_mse,
        }
    }

    pub fn summary(&self, metric: Metric) -> MetricSummary {
        summarize(self.values(metric))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellFailure {
    pub method: Method,
    pub replication: usize,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub reps: usize,
    /// Network to fit; the function's default architecture when `None`.
    pub spec: Option<NetworkSpec>,
    pub train_cfg: TrainConfig,
    /// Worker threads; rayon's default when `None`.
    pub jobs: Option<usize>,
}

impl RunOptions {
    pub fn new(reps: usize, train_cfg: TrainConfig) -> Self {
        RunOptions {
            reps,
            spec: None,
            train_cfg,
            jobs: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchmarkReport {
    pub dgp: DgpSpec,
    pub spec: NetworkSpec,
    pub train_cfg: TrainConfig,
    pub reps: usize,
    pub methods: Vec<MethodReport>,
    pub failures: Vec<CellFailure>,
}

/// Runs `reps` replications of the scenario. Replication `r` draws its data
/// with seed `dgp.seed + r` and trains every method from that same seed.
/// Failed fits become missing cells listed in `failures`.
pub fn run_replications(dgp: &DgpSpec, methods: &[Method], opts: &RunOptions) -> Result<BenchmarkReport> {
    if opts.reps == 0 {
        return Err(Error::Config("at least one replication is required".into()));
    }
    if methods.is_empty() {
        return Err(Error::Config("no methods given".into()));
    }
    dgp.validate()?;
    opts.train_cfg.validate()?;
    for m in methods {
        m.validate()?;
    }
    let spec = opts.spec.clone().unwrap_or_else(|| dgp.id.architecture());
    if spec.input_dim() != dgp.id.input_dim() {
        return Err(Error::Dimension {
            layer: "network input".into(),
            expected: dgp.id.input_dim(),
            actual: spec.input_dim(),
        });
    }

    let cells: Vec<(usize, usize)> = (0..opts.reps)
        .flat_map(|r| (0..methods.len()).map(move |m| (r, m)))
        .collect();
    let run_cell = |&(r, m): &(usize, usize)| -> Result<(f64, f64)> {
        let seed = dgp.seed.wrapping_add(r as u64);
        let (train, test) = gen_dataset(&DgpSpec { seed, ..dgp.clone() })?;
        let cfg = TrainConfig {
            seed,
            ..opts.train_cfg.clone()
        };
        let fit = methods[m].fit(&spec, &train, &cfg)?;
        let fitted = predict(&spec, &fit.theta, train.xs())?;
        let test_fit = predict(&spec, &fit.theta, test.xs())?;
        let a = tmse(train.ys(), &fitted, dgp.delta)?;
        let b = mse(test.ys(), &test_fit)?;
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::Config("non-finite metric".into()));
        }
        Ok((a, b))
    };
    let outcomes: Vec<Result<(f64, f64)>> = match opts.jobs {
        Some(jobs) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.max(1))
                .build()
                .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
            pool.install(|| cells.par_iter().map(run_cell).collect())
        }
        None => cells.par_iter().map(run_cell).collect(),
    };

    let mut reports: Vec<MethodReport> = methods
        .iter()
        .map(|&method| MethodReport {
            method,
            train_tmse: vec![None; opts.reps],
            test_mse: vec![None; opts.reps],
        })
        .collect();
    let mut failures = Vec::new();
    for (&(r, m), outcome) in cells.iter().zip(outcomes) {
        match outcome {
            Ok((a, b)) => {
                reports[m].train_tmse[r] = Some(a);
                reports[m].test_mse[r] = Some(b);
            }
            Err(e) => {
                log::warn!("{} replication {r} failed: {e}", methods[m]);
                failures.push(CellFailure {
                    method: methods[m],
                    replication: r,
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(BenchmarkReport {
        dgp: dgp.clone(),
        spec,
        train_cfg: opts.train_cfg.clone(),
        reps: opts.reps,
        methods: reports,
        failures,
    })
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:e}")
    } else {
        "NaN".into()
    }
}

impl BenchmarkReport {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn method(&self, method: &Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| &r.method == method)
    }

    /// `method,beta,delta,metric,mean,stderr,R`, with `R` the number of
    /// completed replications.
    pub fn results_csv(&self) -> String {
        let mut out = String::from("method,beta,delta,metric,mean,stderr,R\n");
        for rep in &self.methods {
            for metric in Metric::ALL {
                let s = rep.summary(metric);
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    rep.method.label(),
                    beta_cell(rep.method.beta()),
                    self.dgp.delta,
                    metric.name(),
                    num(s.mean),
                    num(s.stderr),
                    s.count
                );
            }
        }
        out
    }

    /// `method,beta,delta,replication,seed,train_tmse,test_mse`, one row per
    /// method and replication; failed cells leave both metrics empty.
    pub fn replications_csv(&self) -> String {
        let mut out = String::from("method,beta,delta,replication,seed,train_tmse,test_mse\n");
        for rep in &self.methods {
            for r in 0..self.reps {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    rep.method.label(),
                    beta_cell(rep.method.beta()),
                    self.dgp.delta,
                    r,
                    self.dgp.seed.wrapping_add(r as u64),
                    rep.train_tmse[r].map(num).unwrap_or_default(),
                    rep.test_mse[r].map(num).unwrap_or_default()
                );
            }
        }
        out
    }

    pub fn metadata(&self) -> Value {
        json!({
            "kind": "benchmark",
            "generator": GENERATOR_NAME,
            "base_seed": self.dgp.seed,
            "replication_seeds": "base_seed + replication",
            "function": self.dgp.id.to_string(),
            "n": self.dgp.n,
            "sigma": self.dgp.sigma,
            "delta": self.dgp.delta,
            "reps": self.reps,
            "architecture": self.spec.to_string(),
            "methods": self.methods.iter().map(|m| m.method.to_string()).collect::<Vec<_>>(),
            "train": train_config_json(&self.train_cfg),
            "failures": self.failures.iter().map(|f| json!({
                "method": f.method.to_string(),
                "replication": f.replication,
                "message": f.message,
            })).collect::<Vec<_>>(),
        })
    }

    /// Writes `results.csv`, `replications.csv` and `metadata.json` into
    /// `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            ("results.csv", self.results_csv()),
            ("replications.csv", self.replications_csv()),
            ("metadata.json", format!("{:#}\n", self.metadata())),
        ];
        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Echo of a training configuration for metadata files.
pub fn train_config_json(cfg: &TrainConfig) -> Value {
    json!({
        "epochs_per_outer": cfg.epochs_per_outer,
        "batch_size": cfg.batch_size,
        "learning_rate": cfg.learning_rate,
        "adam_beta1": cfg.adam_beta1,
        "adam_beta2": cfg.adam_beta2,
        "adam_eps": cfg.adam_eps,
        "sigma_solver": format!("{:?}", cfg.sigma_solver),
        "gtol": cfg.gtol,
        "max_sigma_iters": cfg.max_sigma_iters,
        "tolerance": cfg.tolerance,
        "max_outer": cfg.max_outer,
        "seed": cfg.seed,
        "grad_selection": format!("{:?}", cfg.grad_selection),
        "descent_guard": cfg.descent_guard,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::PhiId;

    #[test]
    fn tmse_examples() {
        let ys = [0.0; 4];
        let fitted = [0.0, 0.0, 0.0, 10.0];
        assert_eq!(tmse(&ys, &fitted, 0.25).unwrap(), 0.0);
        assert_eq!(tmse(&ys, &fitted, 0.0).unwrap(), 25.0);
        assert_eq!(tmse(&ys, &fitted, 0.0).unwrap(), mse(&ys, &fitted).unwrap());
        assert!(tmse(&ys, &fitted, 1.0).is_err());
        assert!(tmse(&ys, &fitted[..3], 0.0).is_err());
    }

    #[test]
    fn tmse_keeps_ceiling_count() {
        let ys: Vec<f64> = (1..=10).map(f64::from).collect();
        let zeros = vec![0.0; 10];
        // keep 8 smallest of 1, 4, ..., 100
        let expected = (1..=8).map(|k| (k * k) as f64).sum::<f64>() / 8.0;
        assert_eq!(tmse(&ys, &zeros, 0.2).unwrap(), expected);
    }

    #[test]
    fn smoke_single_replication() {
        let dgp = DgpSpec::new(PhiId::Phi1, 0.0, 11);
        let cfg = TrainConfig {
            max_outer: 1,
            epochs_per_outer: 2,
            ..TrainConfig::default()
        };
        let report = run_replications(&dgp, &[Method::Loss(crate::CompetitorLoss::Mse)], &RunOptions::new(1, cfg)).unwrap();
        assert!(report.is_complete());
        let s = report.methods[0].summary(Metric::TrainTmse);
        assert_eq!(s.count, 1);
        assert!(s.mean.is_finite() && s.stderr.is_nan());
        let csv = report.results_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(1).unwrap().starts_with("lse,,0,train_tmse,"));
    }
}
