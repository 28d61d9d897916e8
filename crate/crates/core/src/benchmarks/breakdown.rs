use std::fmt::Write as _;

use rand::seq::index;
use rayon::prelude::*;

use super::dgp::stream_rng;
use crate::dataset::Dataset;
use crate::dpd::DpdConfig;
use crate::error::{Error, Result};
use crate::error_model::ErrorModel;
use crate::nn::NetworkSpec;
use crate::trainer::{self, predict, TrainConfig};

/// Generator stream picking the rows to corrupt.
const CONTAMINATION_STREAM: u64 = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct BreakdownConfig {
    pub deltas: Vec<f64>,
    /// Values the corrupted responses are set to.
    pub magnitudes: Vec<f64>,
    pub betas: Vec<f64>,
    pub model: ErrorModel,
    /// Seeds the choice of corrupted rows and every fit.
    pub seed: u64,
    pub train_cfg: TrainConfig,
}

impl BreakdownConfig {
    pub fn new(train_cfg: TrainConfig) -> Self {
        BreakdownConfig {
            deltas: vec![0.0, 0.1, 0.2, 0.3, 0.4],
            magnitudes: vec![1e2, 1e4, 1e6],
            betas: vec![0.0, 0.1, 0.3, 0.5],
            model: ErrorModel::Gaussian,
            seed: train_cfg.seed,
            train_cfg,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BreakdownRow {
    pub delta: f64,
    pub magnitude: f64,
    pub beta: f64,
    /// `max_i |mu_hat(x_i)|` over the design.
    pub max_abs_fit: f64,
    pub sigma: f64,
    pub clean_max_abs_fit: f64,
    pub clean_sigma: f64,
}

impl BreakdownRow {
    pub fn fit_ratio(&self) -> f64 {
        self.max_abs_fit / self.clean_max_abs_fit
    }

    pub fn sigma_ratio(&self) -> f64 {
        self.sigma / self.clean_sigma
    }
}

/// `(max_i |mu_hat(x_i)|, sigma_hat)` of a DPD fit.
fn fit_summary(spec: &NetworkSpec, data: &Dataset, beta: f64, cfg: &BreakdownConfig) -> Result<(f64, f64)> {
    let dpd = DpdConfig::new(beta, cfg.model)?;
    let train_cfg = TrainConfig {
        seed: cfg.seed,
        ..cfg.train_cfg.clone()
    };
    let fit = trainer::fit(&dpd, spec, data, &train_cfg)?;
    let fitted = predict(spec, &fit.theta, data.xs())?;
    let max = fitted.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    Ok((max, fit.sigma.unwrap_or(f64::NAN)))
}

/// Sets `floor(delta n)` seeded rows of `base` to the response `magnitude`.
pub(crate) fn contaminate_responses(base: &Dataset, delta: f64, magnitude: f64, seed: u64) -> Dataset {
    let n = base.len();
    let k = (delta * n as f64).floor() as usize;
    let mut rng = stream_rng(seed, CONTAMINATION_STREAM);
    let mut data = base.clone();
    for i in index::sample(&mut rng, n, k) {
        data.ys_mut()[i] = magnitude;
        data.contaminated_mut()[i] = true;
    }
    data
}

/// Fits every `(delta, magnitude, beta)` cell of the grid and records how far
/// the fitted values and scale move from the clean fit.
pub fn breakdown_stress(spec: &NetworkSpec, base: &Dataset, cfg: &BreakdownConfig) -> Result<Vec<BreakdownRow>> {
    base.require_non_empty()?;
    cfg.train_cfg.validate()?;
    if let Some(&d) = cfg.deltas.iter().find(|d| !(0.0..0.5).contains(*d)) {
        return Err(Error::Config(format!("contamination fraction must lie in [0, 0.5), got {d}")));
    }
    for &beta in &cfg.betas {
        DpdConfig::new(beta, cfg.model)?;
    }
    let clean: Vec<(f64, f64)> = cfg
        .betas
        .par_iter()
        .map(|&beta| fit_summary(spec, base, beta, cfg))
        .collect::<Result<_>>()?;
    let mut cells = Vec::new();
    for &delta in &cfg.deltas {
        for &magnitude in &cfg.magnitudes {
            for b in 0..cfg.betas.len() {
                cells.push((delta, magnitude, b));
            }
        }
    }
    cells
        .par_iter()
        .map(|&(delta, magnitude, b)| {
            let data = contaminate_responses(base, delta, magnitude, cfg.seed);
            let (max_abs_fit, sigma) = fit_summary(spec, &data, cfg.betas[b], cfg)?;
            Ok(BreakdownRow {
                delta,
                magnitude,
                beta: cfg.betas[b],
                max_abs_fit,
                sigma,
                clean_max_abs_fit: clean[b].0,
                clean_sigma: clean[b].1,
            })
        })
        .collect()
}

/// `delta,magnitude,beta,max_abs_fit,sigma,clean_max_abs_fit,clean_sigma`.
pub fn breakdown_csv(rows: &[BreakdownRow]) -> String {
    let mut out = String::from("delta,magnitude,beta,max_abs_fit,sigma,clean_max_abs_fit,clean_sigma\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:e},{},{:e},{:e},{:e},{:e}",
            r.delta, r.magnitude, r.beta, r.max_abs_fit, r.sigma, r.clean_max_abs_fit, r.clean_sigma
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contamination_touches_exactly_floor_delta_n_rows() {
        let base = Dataset::new(1, (0..37).map(f64::from).collect(), vec![0.5; 37]).unwrap();
        let data = contaminate_responses(&base, 0.3, 1e6, 4);
        assert_eq!(data.ys().iter().filter(|&&y| y == 1e6).count(), 11);
        assert_eq!(data.contaminated().iter().filter(|&&c| c).count(), 11);
        assert_eq!(contaminate_responses(&base, 0.0, 1e6, 4), base);
    }
}
