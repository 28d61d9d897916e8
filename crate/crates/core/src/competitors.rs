//! Baseline losses trained with the same ADAM loop as the DPD fit, with no
//! scale parameter.

use std::fmt;
use std::str::FromStr;

use crate::dataset::Dataset;
use crate::dpd;
use crate::error::{Error, Result};
use crate::nn::{GradSelection, NetworkSpec, ParamVector, Scratch};
use crate::trainer::{self, derive_seed, FitResult, OuterRecord, TrainConfig, DESCENT_SLACK};

pub const HUBER_C: f64 = 1.345;
pub const TUKEY_C: f64 = 4.685;
/// Default kept fraction for LTS and LTA.
pub const DEFAULT_TRIM_KEEP: f64 = 0.75;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CompetitorLoss {
    Mse,
    Mae,
    /// Least mean log squares, `ln(1 + r^2 / 2)`.
    Lmls,
    Huber(f64),
    Tukey(f64),
    /// Mean of the `h` smallest squared residuals.
    Lts(usize),
    /// Mean of the `h` smallest absolute residuals.
    Lta(usize),
}

/// `ceil(0.75 n)`, at least 1.
pub fn default_trim_h(n: usize) -> usize {
    ((DEFAULT_TRIM_KEEP * n as f64).ceil() as usize).clamp(1, n.max(1))
}

impl CompetitorLoss {
    pub fn huber() -> Self {
        CompetitorLoss::Huber(HUBER_C)
    }

    pub fn tukey() -> Self {
        CompetitorLoss::Tukey(TUKEY_C)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match *self {
            CompetitorLoss::Huber(c) | CompetitorLoss::Tukey(c) if !(c > 0.0 && c.is_finite()) => {
                Err(Error::Config(format!("tuning constant must be positive, got {c}")))
            }
            CompetitorLoss::Lts(h) | CompetitorLoss::Lta(h) if h == 0 || h > n => Err(Error::TrimTooLarge { h, n }),
            _ => Ok(()),
        }
    }

    fn trim_h(&self) -> Option<usize> {
        match *self {
            CompetitorLoss::Lts(h) | CompetitorLoss::Lta(h) => Some(h),
            _ => None,
        }
    }

    /// Per-residual `rho(r)`; for the trimmed losses the untrimmed term.
    pub fn rho(&self, r: f64) -> f64 {
        match *self {
            CompetitorLoss::Mse | CompetitorLoss::Lts(_) => r * r,
            CompetitorLoss::Mae | CompetitorLoss::Lta(_) => r.abs(),
            CompetitorLoss::Lmls => (0.5 * r * r).ln_1p(),
            CompetitorLoss::Huber(c) => {
                if r.abs() <= c {
                    0.5 * r * r
                } else {
                    c * (r.abs() - 0.5 * c)
                }
            }
            CompetitorLoss::Tukey(c) => {
                if r.abs() <= c {
                    let q = 1.0 - (r / c).powi(2);
                    c * c / 6.0 * (1.0 - q * q * q)
                } else {
                    c * c / 6.0
                }
            }
        }
    }

    /// `d rho / d r`, with 0 at the kink of `|r|`.
    pub fn rho_prime(&self, r: f64) -> f64 {
        match *self {
            CompetitorLoss::Mse | CompetitorLoss::Lts(_) => 2.0 * r,
            CompetitorLoss::Mae | CompetitorLoss::Lta(_) => {
                if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            CompetitorLoss::Lmls => r / (1.0 + 0.5 * r * r),
            CompetitorLoss::Huber(c) => r.clamp(-c, c),
            CompetitorLoss::Tukey(c) => {
                if r.abs() <= c {
                    let q = 1.0 - (r / c).powi(2);
                    r * q * q
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for CompetitorLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            CompetitorLoss::Mse => f.write_str("lse"),
            CompetitorLoss::Mae => f.write_str("lad"),
            CompetitorLoss::Lmls => f.write_str("lmls"),
            CompetitorLoss::Huber(c) if c == HUBER_C => f.write_str("huber"),
            CompetitorLoss::Huber(c) => write!(f, "huber:{c}"),
            CompetitorLoss::Tukey(c) if c == TUKEY_C => f.write_str("tukey"),
            CompetitorLoss::Tukey(c) => write!(f, "tukey:{c}"),
            CompetitorLoss::Lts(h) => write!(f, "lts:{h}"),
            CompetitorLoss::Lta(h) => write!(f, "lta:{h}"),
        }
    }
}

impl FromStr for CompetitorLoss {
    type Err = Error;

    /// Accepts `lse`/`mse`, `lad`/`mae`, `lmls`, `huber[:c]`, `tukey[:c]`,
    /// `lts:h`, `lta:h`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (name, arg) = match s.split_once(':') {
            Some((a, b)) => (a, Some(b)),
            None => (s.as_str(), None),
        };
        let real = |default: f64| -> Result<f64> {
            arg.map_or(Ok(default), |a| {
                a.parse().map_err(|_| Error::Config(format!("bad tuning constant `{a}` in `{s}`")))
            })
        };
        let count = || -> Result<usize> {
            let a = arg.ok_or_else(|| Error::Config(format!("`{name}` needs a trimming count, e.g. `{name}:75`")))?;
            a.parse().map_err(|_| Error::Config(format!("bad trimming count `{a}` in `{s}`")))
        };
        match name {
            "lse" | "mse" => Ok(CompetitorLoss::Mse),
            "lad" | "mae" => Ok(CompetitorLoss::Mae),
            "lmls" => Ok(CompetitorLoss::Lmls),
            "huber" => Ok(CompetitorLoss::Huber(real(HUBER_C)?)),
            "tukey" => Ok(CompetitorLoss::Tukey(real(TUKEY_C)?)),
            "lts" => Ok(CompetitorLoss::Lts(count()?)),
            "lta" => Ok(CompetitorLoss::Lta(count()?)),
            other => Err(Error::Config(format!("unknown loss `{other}`"))),
        }
    }
}

/// Indices of the `h` smallest `rho` values (ties broken by index).
fn kept_indices(loss: &CompetitorLoss, residuals: &[f64], h: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..residuals.len()).collect();
    idx.sort_by(|&a, &b| {
        loss.rho(residuals[a])
            .total_cmp(&loss.rho(residuals[b]))
            .then(a.cmp(&b))
    });
    idx.truncate(h);
    idx
}

/// Mean loss over the residuals.
pub fn comp_loss(loss: &CompetitorLoss, residuals: &[f64]) -> Result<f64> {
    if residuals.is_empty() {
        return Err(Error::EmptyDataset);
    }
    loss.validate(residuals.len())?;
    match loss.trim_h() {
        Some(h) => {
            let mut terms: Vec<f64> = residuals.iter().map(|&r| loss.rho(r)).collect();
            terms.sort_by(f64::total_cmp);
            Ok(terms[..h].iter().sum::<f64>() / h as f64)
        }
        None => Ok(residuals.iter().map(|&r| loss.rho(r)).sum::<f64>() / residuals.len() as f64),
    }
}

/// Overwrites `grad` with the gradient of the mean loss over `batch`. For
/// trimmed losses `h` is the number of rows kept within the batch, chosen on
/// the residuals at `theta`.
#[allow(clippy::too_many_arguments)]
fn accumulate_comp_grad(
    loss: &CompetitorLoss,
    h: Option<usize>,
    spec: &NetworkSpec,
    theta: &[f64],
    data: &Dataset,
    batch: &[usize],
    sel: GradSelection,
    scratch: &mut Scratch,
    grad: &mut [f64],
) {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let rows: Vec<usize> = match h {
        Some(h) => {
            let r: Vec<f64> = batch
                .iter()
                .map(|&i| data.y(i) - spec.forward_with(theta, data.x(i), scratch))
                .collect();
            kept_indices(loss, &r, h).into_iter().map(|k| batch[k]).collect()
        }
        None => batch.to_vec(),
    };
    let scale = -1.0 / rows.len() as f64;
    for i in rows {
        let r = data.y(i) - spec.forward_with(theta, data.x(i), scratch);
        let coef = scale * loss.rho_prime(r);
        if coef != 0.0 {
            spec.accumulate_grad(theta, scratch, coef, sel, grad);
        }
    }
}

/// Gradient of `comp_loss` over all rows of `batch` with respect to `theta`.
pub fn comp_grad(
    loss: &CompetitorLoss,
    spec: &NetworkSpec,
    theta: &ParamVector,
    batch: &Dataset,
    sel: GradSelection,
) -> Result<Vec<f64>> {
    batch.require_non_empty()?;
    loss.validate(batch.len())?;
    spec.check_params(theta)?;
    dpd::check_data_dim(spec, batch)?;
    let rows: Vec<usize> = (0..batch.len()).collect();
    let mut scratch = Scratch::new(spec);
    let mut grad = vec![0.0; theta.len()];
    accumulate_comp_grad(loss, loss.trim_h(), spec, theta.as_slice(), batch, &rows, sel, &mut scratch, &mut grad);
    Ok(grad)
}

/// Trimmed count for a batch of `b` rows out of `n`: `ceil(h b / n)`.
fn batch_h(h: usize, b: usize, n: usize) -> usize {
    ((h * b).div_ceil(n)).clamp(1, b)
}

/// Trains `theta` on `loss` from a Glorot start: outer iterations of `E`
/// ADAM epochs with reset moments, stopped by the same loss-reduction rule
/// as the DPD fit.
pub fn fit_competitor(loss: &CompetitorLoss, spec: &NetworkSpec, data: &Dataset, train_cfg: &TrainConfig) -> Result<FitResult> {
    let theta0 = spec.glorot_init(train_cfg.seed);
    fit_competitor_from(loss, spec, data, train_cfg, theta0)
}

pub fn fit_competitor_from(
    loss: &CompetitorLoss,
    spec: &NetworkSpec,
    data: &Dataset,
    train_cfg: &TrainConfig,
    theta0: ParamVector,
) -> Result<FitResult> {
    train_cfg.validate()?;
    data.require_non_empty()?;
    let n = data.len();
    loss.validate(n)?;
    spec.check_params(&theta0)?;
    dpd::check_data_dim(spec, data)?;
    let sel = train_cfg.grad_selection;
    let full_loss = |theta: &ParamVector| -> Result<f64> { comp_loss(loss, &dpd::residuals(spec, theta, data)?) };

    let mut theta = theta0;
    let initial_loss = full_loss(&theta)?;
    let mut prev = initial_loss;
    let mut trace = Vec::new();
    let mut violations = 0;
    let trim = loss.trim_h();
    for k in 0..train_cfg.max_outer {
        let mut scratch = Scratch::new(spec);
        let candidate = trainer::run_adam(&theta, n, train_cfg, derive_seed(train_cfg.seed, k as u64 + 1), |w, rows, grad| {
            let h = trim.map(|h| batch_h(h, rows.len(), n));
            accumulate_comp_grad(loss, h, spec, w, data, rows, sel, &mut scratch, grad)
        });
        let mut value = full_loss(&candidate)?;
        if train_cfg.descent_guard && !(value <= prev) {
            value = prev;
        } else {
            theta = candidate;
        }
        let descent_ok = value <= prev + DESCENT_SLACK;
        if !descent_ok {
            violations += 1;
        }
        trace.push(OuterRecord {
            loss: value,
            sigma: None,
            descent_ok,
        });
        if !(prev - value >= train_cfg.tolerance) {
            break;
        }
        prev = value;
    }
    Ok(FitResult {
        theta,
        sigma: None,
        initial_loss,
        outer_iters: trace.len(),
        trace,
        descent_violations: violations,
    })
}
