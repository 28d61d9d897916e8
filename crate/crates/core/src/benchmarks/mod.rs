//! Simulation study, breakdown stress test and cross-validation harness.

mod breakdown;
mod csv_data;
mod cv;
mod dgp;
mod replications;

use std::fmt;

pub use breakdown::{breakdown_csv, breakdown_stress, BreakdownConfig, BreakdownRow};
pub use csv_data::{load_csv, ColumnScale, ResponseColumn, ScalePolicy, Scaling};
pub use cv::{fold_assignment, kfold_cv, CvReport};
pub use dgp::{eval_phi, gen_dataset, stream_rng, Contamination, DgpSpec, PhiId, GENERATOR_NAME, TEST_STREAM, TRAIN_STREAM};
pub use replications::{
    mse, run_replications, tmse, train_config_json, BenchmarkReport, CellFailure, MethodReport, Metric, MetricSummary,
    RunOptions,
};

use crate::competitors::{self, default_trim_h, CompetitorLoss};
use crate::dataset::Dataset;
use crate::dpd::DpdConfig;
use crate::error::{Error, Result};
use crate::error_model::ErrorModel;
use crate::nn::NetworkSpec;
use crate::trainer::{self, FitResult, TrainConfig};

/// A training method of the comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    /// DPD fit with tuning parameter `beta`.
    Dpd { beta: f64, model: ErrorModel },
    Loss(CompetitorLoss),
    /// LTS keeping `ceil(0.75 n)` rows of whatever it is fit on.
    LtsDefault,
    /// LTA keeping `ceil(0.75 n)` rows of whatever it is fit on.
    LtaDefault,
}

impl Method {
    pub fn dpd(beta: f64) -> Self {
        Method::Dpd {
            beta,
            model: ErrorModel::Gaussian,
        }
    }

    /// Name used in result files; the DPD fits are all `rrnet`.
    pub fn label(&self) -> String {
        match self {
            Method::Dpd { .. } => "rrnet".into(),
            Method::Loss(l) => l.to_string(),
            Method::LtsDefault => "lts".into(),
            Method::LtaDefault => "lta".into(),
        }
    }

    pub fn beta(&self) -> Option<f64> {
        match self {
            Method::Dpd { beta, .. } => Some(*beta),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Method::Dpd { beta, model } => DpdConfig::new(*beta, *model).map(|_| ()),
            Method::Loss(l) => match l {
                CompetitorLoss::Lts(_) | CompetitorLoss::Lta(_) => Ok(()),
                other => other.validate(usize::MAX),
            },
            _ => Ok(()),
        }
    }

    /// Expands a comma list of method names; `dpd` (or `rrnet`) becomes one
    /// method per entry of `betas`, and `lts`/`lta` without a count use the
    /// default trimming.
    pub fn parse_list(methods: &str, betas: &[f64], model: ErrorModel) -> Result<Vec<Method>> {
        let mut out = Vec::new();
        for name in methods.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match name.to_ascii_lowercase().as_str() {
                "dpd" | "rrnet" => {
                    if betas.is_empty() {
                        return Err(Error::Config("method `dpd` needs at least one beta".into()));
                    }
                    for &beta in betas {
                        let m = Method::Dpd { beta, model };
                        m.validate()?;
                        out.push(m);
                    }
                }
                "lts" => out.push(Method::LtsDefault),
                "lta" => out.push(Method::LtaDefault),
                _ => out.push(Method::Loss(name.parse()?)),
            }
        }
        if out.is_empty() {
            return Err(Error::Config("no methods given".into()));
        }
        Ok(out)
    }

    /// Fits the method on `data`.
    pub fn fit(&self, spec: &NetworkSpec, data: &Dataset, train_cfg: &TrainConfig) -> Result<FitResult> {
        match *self {
            Method::Dpd { beta, model } => trainer::fit(&DpdConfig::new(beta, model)?, spec, data, train_cfg),
            Method::Loss(loss) => competitors::fit_competitor(&loss, spec, data, train_cfg),
            Method::LtsDefault => {
                competitors::fit_competitor(&CompetitorLoss::Lts(default_trim_h(data.len())), spec, data, train_cfg)
            }
            Method::LtaDefault => {
                competitors::fit_competitor(&CompetitorLoss::Lta(default_trim_h(data.len())), spec, data, train_cfg)
            }
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.beta() {
            Some(b) => write!(f, "rrnet(beta={b})"),
            None => f.write_str(&self.label()),
        }
    }
}

/// Formats an optional beta for a CSV cell.
pub(crate) fn beta_cell(beta: Option<f64>) -> String {
    beta.map(|b| b.to_string()).unwrap_or_default()
}
