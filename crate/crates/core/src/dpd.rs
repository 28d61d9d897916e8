//! The density power divergence loss of a regression network and its
//! gradients in the network parameters and the error scale.
//!
//! For `beta > 0` one observation contributes
//!
//! ```text
//! V = sigma^-beta C00 - (1 + 1/beta) sigma^-beta f((y - mu)/sigma)^beta + 1/beta
//! ```
//!
//! and for `beta = 0` the negative log-likelihood `ln sigma - ln f((y - mu)/sigma)`.
//! The `beta = 0` case is its own branch, never the `beta > 0` formula at a
//! tiny `beta`. Sums run in observation order, so results are reproducible.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::error_model::ErrorModel;
use crate::nn::{GradSelection, NetworkSpec, ParamVector, Scratch};

/// Default lower bound on the error scale.
pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DpdConfig {
    beta: f64,
    sigma_floor: f64,
    model: ErrorModel,
    c00: f64,
}

impl DpdConfig {
    pub fn new(beta: f64, model: ErrorModel) -> Result<Self> {
        Self::with_floor(beta, DEFAULT_SIGMA_FLOOR, model)
    }

    pub fn with_floor(beta: f64, sigma_floor: f64, model: ErrorModel) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::BetaOutOfRange(beta));
        }
        if !(sigma_floor > 0.0 && sigma_floor.is_finite()) {
            return Err(Error::Config(format!("sigma floor must be positive, got {sigma_floor}")));
        }
        let c00 = model.c_constant(0, 0, beta)?;
        Ok(DpdConfig {
            beta,
            sigma_floor,
            model,
            c00,
        })
    }

    pub fn gaussian(beta: f64) -> Result<Self> {
        Self::new(beta, ErrorModel::Gaussian)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn sigma_floor(&self) -> f64 {
        self.sigma_floor
    }

    pub fn model(&self) -> ErrorModel {
        self.model
    }

    /// `C^(beta)_{0,0}` for this model.
    pub fn c00(&self) -> f64 {
        self.c00
    }

    /// Per-observation loss `V_beta` for a residual `r = y - mu`.
    pub fn v_residual(&self, r: f64, sigma: f64) -> f64 {
        let s = r / sigma;
        if self.beta == 0.0 {
            sigma.ln() - self.model.log_density(s)
        } else {
            let b = self.beta;
            let scale = sigma.powf(-b);
            scale * self.c00 - (1.0 + 1.0 / b) * scale * self.model.density_pow(b, s) + 1.0 / b
        }
    }

    /// Mean loss over a residual vector.
    pub fn loss_from_residuals(&self, residuals: &[f64], sigma: f64) -> Result<f64> {
        if residuals.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = residuals.len() as f64;
        let b = self.beta;
        if b == 0.0 {
            let nll: f64 = residuals.iter().map(|&r| -self.model.log_density(r / sigma)).sum();
            return Ok(sigma.ln() + nll / n);
        }
        let mean_w = match self.model {
            ErrorModel::Gaussian => {
                // w_i = exp(-beta r_i^2 / (2 sigma^2)), f^beta = (2 pi)^(-beta/2) w_i
                let k = -b / (2.0 * sigma * sigma);
                let sum_w: f64 = residuals.iter().map(|&r| (k * r * r).exp()).sum();
                (2.0 * std::f64::consts::PI).powf(-0.5 * b) * sum_w / n
            }
            model => residuals.iter().map(|&r| model.density_pow(b, r / sigma)).sum::<f64>() / n,
        };
        let scale = sigma.powf(-b);
        Ok(scale * self.c00 - (1.0 + 1.0 / b) * scale * mean_w + 1.0 / b)
    }

    /// `d L / d sigma` over a residual vector.
    pub fn grad_sigma_from_residuals(&self, residuals: &[f64], sigma: f64) -> Result<f64> {
        if residuals.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = residuals.len() as f64;
        let b = self.beta;
        let sum_psi2: f64 = residuals.iter().map(|&r| self.model.psi2(b, r / sigma)).sum();
        let denom = sigma.powf(1.0 + b);
        Ok((1.0 + b) * sum_psi2 / (n * denom) - b * self.c00 / denom)
    }

    fn check_sigma(&self, sigma: f64) -> Result<()> {
        if !(sigma >= self.sigma_floor && sigma.is_finite()) {
            return Err(Error::Config(format!(
                "sigma = {sigma} is below the floor {} or not finite",
                self.sigma_floor
            )));
        }
        Ok(())
    }
}

/// A point `eta = (theta, sigma)` of the joint parameter space.
#[derive(Clone, Debug, PartialEq)]
pub struct EtaPoint {
    pub theta: ParamVector,
    pub sigma: f64,
}

impl EtaPoint {
    pub fn new(theta: ParamVector, sigma: f64, cfg: &DpdConfig) -> Result<Self> {
        cfg.check_sigma(sigma)?;
        Ok(EtaPoint { theta, sigma })
    }
}

/// Residuals `y_i - mu(x_i, theta)` in observation order.
pub fn residuals(spec: &NetworkSpec, theta: &ParamVector, data: &Dataset) -> Result<Vec<f64>> {
    spec.check_params(theta)?;
    check_data_dim(spec, data)?;
    let mut scratch = Scratch::new(spec);
    Ok(data
        .rows()
        .map(|(x, y)| y - spec.forward_with(theta.as_slice(), x, &mut scratch))
        .collect())
}

pub(crate) fn check_data_dim(spec: &NetworkSpec, data: &Dataset) -> Result<()> {
    if data.dim() != spec.input_dim() {
        return Err(Error::Dimension {
            layer: "input layer".into(),
            expected: spec.input_dim(),
            actual: data.dim(),
        });
    }
    Ok(())
}

/// `V_beta(y, x | eta)` for a single observation.
pub fn v_beta(cfg: &DpdConfig, spec: &NetworkSpec, eta: &EtaPoint, y: f64, x: &[f64]) -> Result<f64> {
    cfg.check_sigma(eta.sigma)?;
    let mu = spec.forward(&eta.theta, x)?;
    Ok(cfg.v_residual(y - mu, eta.sigma))
}

/// Mean DPD loss over `data`.
pub fn loss(cfg: &DpdConfig, spec: &NetworkSpec, eta: &EtaPoint, data: &Dataset) -> Result<f64> {
    data.require_non_empty()?;
    let r = residuals(spec, &eta.theta, data)?;
    cfg.loss_from_residuals(&r, eta.sigma)
}

/// `d L / d theta` over the whole of `batch`.
pub fn grad_theta_loss(
    cfg: &DpdConfig,
    spec: &NetworkSpec,
    eta: &EtaPoint,
    batch: &Dataset,
    sel: GradSelection,
) -> Result<Vec<f64>> {
    batch.require_non_empty()?;
    spec.check_params(&eta.theta)?;
    check_data_dim(spec, batch)?;
    let indices: Vec<usize> = (0..batch.len()).collect();
    let mut scratch = Scratch::new(spec);
    let mut grad = vec![0.0; eta.theta.len()];
    accumulate_theta_grad(cfg, spec, eta.theta.as_slice(), eta.sigma, batch, &indices, sel, &mut scratch, &mut grad);
    Ok(grad)
}

/// Writes `((1+beta) / (|B| sigma^(1+beta))) sum_B psi_1(r_i/sigma) d mu(x_i)`
/// into `grad` (overwriting it).
#[allow(clippy::too_many_arguments)]
pub(crate) fn accumulate_theta_grad(
    cfg: &DpdConfig,
    spec: &NetworkSpec,
    theta: &[f64],
    sigma: f64,
    data: &Dataset,
    batch: &[usize],
    sel: GradSelection,
    scratch: &mut Scratch,
    grad: &mut [f64],
) {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let b = cfg.beta;
    let lead = (1.0 + b) / (batch.len() as f64 * sigma.powf(1.0 + b));
    for &i in batch {
        let mu = spec.forward_with(theta, data.x(i), scratch);
        let coef = lead * cfg.model.psi1(b, (data.y(i) - mu) / sigma);
        if coef != 0.0 {
            spec.accumulate_grad(theta, scratch, coef, sel, grad);
        }
    }
}

/// `d L / d sigma` over `data`.
pub fn grad_sigma_loss(cfg: &DpdConfig, spec: &NetworkSpec, eta: &EtaPoint, data: &Dataset) -> Result<f64> {
    data.require_non_empty()?;
    cfg.check_sigma(eta.sigma)?;
    let r = residuals(spec, &eta.theta, data)?;
    cfg.grad_sigma_from_residuals(&r, eta.sigma)
}
