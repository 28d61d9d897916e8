//! `rrnet` command-line front end.

mod commands;
mod config;
mod error;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use rrnet::benchmarks::PhiId;
use rrnet::{ErrorModel, SigmaSolver};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "rrnet", version, about = "Robust regression networks trained under the density power divergence")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit one network to a CSV dataset.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Replicated simulation on one of the target functions.
    #[command(args_override_self = true)]
    Benchmark(BenchmarkArgs),
    /// Influence curves of the one-hidden-unit example networks.
    #[command(args_override_self = true)]
    Influence(InfluenceArgs),
    /// Fits under growing response contamination.
    #[command(args_override_self = true)]
    Breakdown(BreakdownArgs),
    /// k-fold cross-validated trimmed MSE on a CSV dataset.
    #[command(args_override_self = true)]
    Cv(CvArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Flat `key = value` file of flag values; explicit flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "rrnet-out")]
    out: PathBuf,
    /// Worker threads (default: logical CPUs).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct Optim {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// ADAM epochs per outer iteration.
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 50)]
    max_outer: usize,
    /// Stop once an outer iteration lowers the loss by less than this.
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    /// `qn` or `fp` (fixed point, Gaussian only).
    #[arg(long, default_value = "qn")]
    sigma_solver: SigmaSolver,
    /// Use the whole sample as one batch.
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    full_batch: bool,
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Response column: a header name, a 0-based index or `last`.
    #[arg(long, default_value = "last")]
    response: String,
    /// Also min-max scale the response.
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    scale_response: bool,
}

#[derive(Args, Debug, Clone)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0.3)]
    beta: f64,
    #[arg(long, default_value = "gaussian")]
    model: ErrorModel,
    /// Hidden layers as `widths:activation` (e.g. `10:sigmoid`, `30,30:relu`)
    /// or `linear`.
    #[arg(long, default_value = "10:sigmoid")]
    arch: String,
    #[command(flatten)]
    optim: Optim,
}

#[derive(Args, Debug, Clone)]
struct BenchmarkArgs {
    #[command(flatten)]
    common: Common,
    /// Target function, `phi1`..`phi7` or `1`..`7`.
    #[arg(long)]
    phi: PhiId,
    /// Contamination fraction in [0, 0.5).
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    /// Comma list: lse, lad, lmls, huber[:c], tukey[:c], lts[:h], lta[:h], dpd.
    #[arg(long, default_value = "lse,dpd")]
    methods: String,
    /// Tuning parameters for `dpd`.
    #[arg(long, default_value = "0.1,0.3,0.5,0.7,1")]
    betas: String,
    #[arg(long, default_value = "gaussian")]
    model: ErrorModel,
    /// Sample size (default: the function's own).
    #[arg(long)]
    n: Option<usize>,
    /// Clean error standard deviation (default: the function's own).
    #[arg(long)]
    sigma: Option<f64>,
    /// Architecture override, as for `train`.
    #[arg(long)]
    arch: Option<String>,
    #[command(flatten)]
    optim: Optim,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Preset {
    /// One sigmoid hidden unit.
    Ex31,
    /// One ReLU hidden unit, compared with its softplus smoothings.
    Ex32,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Curve {
    All,
    Theta,
    Sigma,
    Predictor,
}

#[derive(Args, Debug, Clone)]
struct InfluenceArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "ex31")]
    preset: Preset,
    /// Comma list of tuning parameters.
    #[arg(long, default_value = "0,0.5")]
    beta: String,
    /// 1-based index of the contaminated observation.
    #[arg(long, default_value_t = 2)]
    i: usize,
    /// Grid of contamination points `lo:hi:count` (default `mu_i - 2 : mu_i + 2 : 401`).
    #[arg(long)]
    tgrid: Option<String>,
    /// Where the predictor influence is evaluated (default: `x_i`).
    #[arg(long)]
    x: Option<f64>,
    #[arg(long, value_enum, default_value = "all")]
    curve: Curve,
    /// Relative singular-value cutoff of the pseudo-inverse.
    #[arg(long, default_value_t = rrnet::influence::DEFAULT_PINV_TOL)]
    pinv_tol: f64,
}

#[derive(Args, Debug, Clone)]
struct BreakdownArgs {
    #[command(flatten)]
    common: Common,
    /// CSV dataset; without it a clean sample of `--phi` is used.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "last")]
    response: String,
    #[arg(long, default_value = "phi5")]
    phi: PhiId,
    #[arg(long, default_value = "0,0.1,0.2,0.3,0.4")]
    deltas: String,
    /// Values the corrupted responses are set to.
    #[arg(long, default_value = "1e2,1e4,1e6")]
    magnitudes: String,
    #[arg(long, default_value = "0,0.1,0.3,0.5")]
    betas: String,
    #[arg(long, default_value = "gaussian")]
    model: ErrorModel,
    #[arg(long)]
    arch: Option<String>,
    #[command(flatten)]
    optim: Optim,
}

#[derive(Args, Debug, Clone)]
struct CvArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Trimming fraction of the held-out TMSE.
    #[arg(long, default_value_t = 0.2)]
    trim: f64,
    #[arg(long, default_value = "dpd")]
    methods: String,
    #[arg(long, default_value = "0,0.1,0.3,0.5,0.7,1")]
    betas: String,
    #[arg(long, default_value = "gaussian")]
    model: ErrorModel,
    #[arg(long, default_value = "10:sigmoid")]
    arch: String,
    #[command(flatten)]
    optim: Optim,
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Train(a) => &a.common,
            Command::Benchmark(a) => &a.common,
            Command::Influence(a) => &a.common,
            Command::Breakdown(a) => &a.common,
            Command::Cv(a) => &a.common,
        }
    }
}

/// Long flag names of a subcommand, the keys a config file may use.
fn known_keys(subcommand: &str) -> Vec<String> {
    Cli::command()
        .find_subcommand(subcommand)
        .map(|c| c.get_arguments().filter_map(|a| a.get_long()).map(str::to_string).collect())
        .unwrap_or_default()
}

fn parse(args: &[OsString]) -> Result<Cli, clap::Error> {
    Cli::try_parse_from(args)
}

/// Parses the command line, splicing in the config file if one is given.
fn resolve(args: Vec<OsString>) -> Result<(Cli, Vec<OsString>), ExitCode> {
    let clap_exit = |e: clap::Error| {
        let _ = e.print();
        if e.use_stderr() {
            ExitCode::from(1)
        } else {
            ExitCode::SUCCESS
        }
    };
    let cli = parse(&args).map_err(clap_exit)?;
    let Some(path) = cli.command.common().config.clone() else {
        return Ok((cli, args));
    };
    let sub = args[1].to_string_lossy().into_owned();
    let extra = config::file_args(&path, &known_keys(&sub)).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(1)
    })?;
    let mut merged = vec![args[0].clone(), args[1].clone()];
    merged.extend(extra);
    merged.extend(args[2..].iter().cloned());
    let cli = parse(&merged).map_err(clap_exit)?;
    Ok((cli, merged))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (cli, argv) = match resolve(std::env::args_os().collect()) {
        Ok(v) => v,
        Err(code) => return code,
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    if let Some(jobs) = cli.command.common().jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global() {
            eprintln!("error: cannot start {jobs} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    let result: Result<commands::Status, CliError> = match &cli.command {
        Command::Train(a) => commands::train(a, &argv),
        Command::Benchmark(a) => commands::benchmark(a, &argv),
        Command::Influence(a) => commands::influence(a, &argv),
        Command::Breakdown(a) => commands::breakdown(a, &argv),
        Command::Cv(a) => commands::cv(a, &argv),
    };
    match result {
        Ok(commands::Status::Complete) => ExitCode::SUCCESS,
        Ok(commands::Status::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
