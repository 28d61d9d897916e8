//! Alternating minimization of the DPD loss: mini-batch ADAM on the network
//! parameters with the scale frozen, then an exact one-dimensional scale
//! update with the parameters frozen, repeated until the full-batch loss
//! stops decreasing by more than the outer tolerance.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;
use crate::dpd::{self, DpdConfig};
use crate::error::{Error, Result};
use crate::error_model::ErrorModel;
use crate::nn::{GradSelection, NetworkSpec, ParamVector, Scratch};

/// Consistency factor turning the MAD into a Gaussian scale estimate.
pub const MAD_SCALE: f64 = 1.4826;

/// Slack allowed before an outer iteration counts as a descent violation.
pub const DESCENT_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SigmaSolver {
    /// Bounded secant quasi-Newton on `sigma`.
    #[default]
    QuasiNewton,
    /// Gaussian reweighting fixed point; falls back to quasi-Newton when the
    /// iteration's denominator turns non-positive.
    FixedPoint,
}

impl FromStr for SigmaSolver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "qn" | "quasi-newton" | "quasinewton" => Ok(SigmaSolver::QuasiNewton),
            "fp" | "fixed-point" | "fixedpoint" => Ok(SigmaSolver::FixedPoint),
            other => Err(Error::Config(format!("unknown sigma solver `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs_per_outer: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub sigma_solver: SigmaSolver,
    pub gtol: f64,
    pub max_sigma_iters: usize,
    /// Outer loop stops once the loss drops by less than this.
    pub tolerance: f64,
    pub max_outer: usize,
    pub seed: u64,
    pub grad_selection: GradSelection,
    /// Reject a parameter update that raises the full-batch loss at the
    /// current scale, keeping the previous parameters instead.
    pub descent_guard: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs_per_outer: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            sigma_solver: SigmaSolver::QuasiNewton,
            gtol: 1e-5,
            max_sigma_iters: 15_000,
            tolerance: 1e-6,
            max_outer: 50,
            seed: 0,
            grad_selection: GradSelection::Zero,
            descent_guard: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("adam_eps", self.adam_eps),
            ("gtol", self.gtol),
            ("tolerance", self.tolerance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.max_outer == 0 {
            return Err(Error::Config("max_outer must be at least 1".into()));
        }
        Ok(())
    }

    pub fn full_batch(mut self) -> Self {
        self.batch_size = usize::MAX;
        self
    }
}

/// One outer iteration of a fit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OuterRecord {
    pub loss: f64,
    pub sigma: Option<f64>,
    pub descent_ok: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub theta: ParamVector,
    /// Fitted error scale; `None` for losses that carry no scale.
    pub sigma: Option<f64>,
    /// Full-batch loss at the initial point.
    pub initial_loss: f64,
    pub trace: Vec<OuterRecord>,
    pub outer_iters: usize,
    pub descent_violations: usize,
}

impl FitResult {
    pub fn loss_trace(&self) -> Vec<f64> {
        self.trace.iter().map(|r| r.loss).collect()
    }

    pub fn final_loss(&self) -> f64 {
        self.trace.last().map_or(self.initial_loss, |r| r.loss)
    }

    /// `outer,loss,sigma,descent_ok` with one row per outer iteration.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("outer,loss,sigma,descent_ok\n");
        for (k, r) in self.trace.iter().enumerate() {
            let sigma = r.sigma.map(|s| format!("{s:.17e}")).unwrap_or_default();
            let _ = writeln!(out, "{},{:.17e},{},{}", k + 1, r.loss, sigma, r.descent_ok);
        }
        out
    }

    pub fn write_trace_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.trace_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Deterministic sub-seed for stream `stream` of a run seeded with `base`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// `1.4826 * median |r_i - median r|`, floored at `sigma_floor`.
pub fn mad_scale(residuals: &[f64], sigma_floor: f64) -> f64 {
    if residuals.is_empty() {
        return sigma_floor;
    }
    let mut r = residuals.to_vec();
    let med = median(&mut r);
    let mut dev: Vec<f64> = residuals.iter().map(|x| (x - med).abs()).collect();
    (MAD_SCALE * median(&mut dev)).max(sigma_floor)
}

/// MAD scale of the residuals of `theta0` on `data`.
pub fn init_sigma_mad(cfg: &DpdConfig, spec: &NetworkSpec, theta0: &ParamVector, data: &Dataset) -> Result<f64> {
    data.require_non_empty()?;
    let r = dpd::residuals(spec, theta0, data)?;
    Ok(mad_scale(&r, cfg.sigma_floor()))
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(d: usize) -> Self {
        Adam {
            m: vec![0.0; d],
            v: vec![0.0; d],
            t: 0,
        }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for ((w, g), (m, v)) in theta.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        }
    }
}

/// `E` epochs of mini-batch ADAM with freshly zeroed moments. Each epoch
/// shuffles the row order with a generator seeded by `seed` and cuts it into
/// contiguous batches; `batch_grad` must overwrite its output slice with the
/// gradient over the given rows.
pub(crate) fn run_adam<G>(
    theta: &ParamVector,
    n: usize,
    cfg: &TrainConfig,
    seed: u64,
    mut batch_grad: G,
) -> ParamVector
where
    G: FnMut(&[f64], &[usize], &mut [f64]),
{
    let mut theta = theta.clone().into_inner();
    let mut adam = Adam::new(theta.len());
    let mut grad = vec![0.0; theta.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let batch = cfg.batch_size.min(n).max(1);
    for _ in 0..cfg.epochs_per_outer {
        if batch < n {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            batch_grad(&theta, chunk, &mut grad);
            adam.step(&mut theta, &grad, cfg);
        }
    }
    ParamVector::new(theta)
}

/// Step 2 of the alternating scheme: ADAM on `theta` with `sigma` frozen.
pub fn adam_theta_update(
    cfg: &DpdConfig,
    spec: &NetworkSpec,
    theta: &ParamVector,
    sigma: f64,
    data: &Dataset,
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<ParamVector> {
    data.require_non_empty()?;
    spec.check_params(theta)?;
    dpd::check_data_dim(spec, data)?;
    if !(sigma >= cfg.sigma_floor()) {
        return Err(Error::Config(format!("sigma = {sigma} is below the floor {}", cfg.sigma_floor())));
    }
    let mut scratch = Scratch::new(spec);
    let sel = train_cfg.grad_selection;
    Ok(run_adam(theta, data.len(), train_cfg, seed, |w, batch, grad| {
        dpd::accumulate_theta_grad(cfg, spec, w, sigma, data, batch, sel, &mut scratch, grad)
    }))
}

/// Minimizes `sigma -> L(theta, sigma)` on `[sigma_floor, inf)` for fixed
/// residuals with a secant quasi-Newton method. Non-positive curvature
/// estimates double the previous inverse-Hessian estimate, and every step is
/// backtracked until the loss does not increase.
pub fn minimize_sigma_qn(cfg: &DpdConfig, residuals: &[f64], sigma_init: f64, train_cfg: &TrainConfig) -> Result<f64> {
    if residuals.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let floor = cfg.sigma_floor();
    let eval = |s: f64| -> Result<(f64, f64)> {
        let f = cfg.loss_from_residuals(residuals, s)?;
        let g = cfg.grad_sigma_from_residuals(residuals, s)?;
        Ok((f, g))
    };
    let mut sigma = if sigma_init.is_finite() { sigma_init.max(floor) } else { floor };
    let (mut f, mut g) = eval(sigma)?;
    if !(f.is_finite() && g.is_finite()) {
        return Err(Error::NonFiniteLoss { last_sigma: sigma });
    }
    let mut inv_hess = 1.0;
    for _ in 0..train_cfg.max_sigma_iters {
        if g.abs() < train_cfg.gtol || (sigma <= floor && g > 0.0) {
            break;
        }
        let mut step = -inv_hess * g;
        let mut accepted = None;
        for _ in 0..80 {
            let trial = (sigma + step).max(floor);
            if trial == sigma {
                break;
            }
            let (ft, gt) = eval(trial)?;
            if ft.is_finite() && gt.is_finite() && ft <= f + 1e-4 * g * (trial - sigma) {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, ft, gt)) = accepted else {
            break;
        };
        let s = trial - sigma;
        let y = gt - g;
        inv_hess = if s * y > 0.0 { s / y } else { 2.0 * inv_hess };
        sigma = trial;
        f = ft;
        g = gt;
    }
    // a few secant steps past the gradient tolerance, kept only while they
    // shrink the gradient without raising the loss
    for _ in 0..3 {
        if g == 0.0 || (sigma <= floor && g > 0.0) {
            break;
        }
        let trial = (sigma - inv_hess * g).max(floor);
        if trial == sigma {
            break;
        }
        let (ft, gt) = eval(trial)?;
        if !(ft.is_finite() && ft <= f && gt.abs() < g.abs()) {
            break;
        }
        let (s, y) = (trial - sigma, gt - g);
        if s * y > 0.0 {
            inv_hess = s / y;
        }
        sigma = trial;
        f = ft;
        g = gt;
    }
    if !f.is_finite() {
        return Err(Error::NonFiniteLoss { last_sigma: sigma });
    }
    Ok(sigma)
}

/// Step 3 with the quasi-Newton solver.
pub fn sigma_update_qn(
    cfg: &DpdConfig,
    spec: &NetworkSpec,
    theta: &ParamVector,
    data: &Dataset,
    sigma_init: f64,
    train_cfg: &TrainConfig,
) -> Result<f64> {
    data.require_non_empty()?;
    let r = dpd::residuals(spec, theta, data)?;
    minimize_sigma_qn(cfg, &r, sigma_init, train_cfg)
}

/// Outcome of the Gaussian fixed-point scale iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FixedPoint {
    Converged(f64),
    /// `sum w_i - n beta / (1 + beta)^(3/2)` was not positive at some iterate.
    DegenerateDenominator,
}

pub const FIXED_POINT_RTOL: f64 = 1e-10;
pub const FIXED_POINT_MAX_ITERS: usize = 10_000;

/// Iterates `sigma^2 <- sum w_i r_i^2 / (sum w_i - n beta/(1+beta)^(3/2))`
/// with `w_i = exp(-beta r_i^2 / (2 sigma^2))`, clamping at `sigma_floor`.
/// Its fixed points are exactly the zeros of the Gaussian sigma-gradient.
pub fn gaussian_fixed_point(residuals: &[f64], sigma_init: f64, beta: f64, sigma_floor: f64) -> FixedPoint {
    let n = residuals.len() as f64;
    let offset = n * beta / (1.0 + beta).powf(1.5);
    let mut sigma = sigma_init.max(sigma_floor);
    for _ in 0..FIXED_POINT_MAX_ITERS {
        let k = -beta / (2.0 * sigma * sigma);
        let (mut sw, mut swr2) = (0.0, 0.0);
        for &r in residuals {
            let w = (k * r * r).exp();
            sw += w;
            swr2 += w * r * r;
        }
        let denom = sw - offset;
        if !(denom > 0.0) {
            return FixedPoint::DegenerateDenominator;
        }
        let next = (swr2 / denom).sqrt().max(sigma_floor);
        let done = ((next - sigma) / sigma).abs() < FIXED_POINT_RTOL || next == sigma_floor;
        sigma = next;
        if done {
            break;
        }
    }
    FixedPoint::Converged(sigma)
}

/// Step 3 with the Gaussian fixed point.
pub fn sigma_update_fixed_point(
    cfg: &DpdConfig,
    spec: &NetworkSpec,
    theta: &ParamVector,
    data: &Dataset,
    sigma_init: f64,
    train_cfg: &TrainConfig,
) -> Result<f64> {
    if cfg.model() != ErrorModel::Gaussian {
        return Err(Error::UnsupportedModel {
            op: "sigma_update_fixed_point",
            required: "gaussian",
        });
    }
    data.require_non_empty()?;
    let r = dpd::residuals(spec, theta, data)?;
    match gaussian_fixed_point(&r, sigma_init, cfg.beta(), cfg.sigma_floor()) {
        FixedPoint::Converged(s) => Ok(s),
        FixedPoint::DegenerateDenominator => minimize_sigma_qn(cfg, &r, sigma_init, train_cfg),
    }
}

fn sigma_step(cfg: &DpdConfig, residuals: &[f64], sigma: f64, train_cfg: &TrainConfig) -> Result<f64> {
    match train_cfg.sigma_solver {
        SigmaSolver::QuasiNewton => minimize_sigma_qn(cfg, residuals, sigma, train_cfg),
        SigmaSolver::FixedPoint => {
            if cfg.model() != ErrorModel::Gaussian {
                return Err(Error::UnsupportedModel {
                    op: "fixed-point sigma solver",
                    required: "gaussian",
                });
            }
            match gaussian_fixed_point(residuals, sigma, cfg.beta(), cfg.sigma_floor()) {
                FixedPoint::Converged(s) => Ok(s),
                FixedPoint::DegenerateDenominator => minimize_sigma_qn(cfg, residuals, sigma, train_cfg),
            }
        }
    }
}

/// Fits `(theta, sigma)` by alternating minimization, starting from a
/// Glorot-uniform `theta` and the MAD scale of its residuals.
pub fn fit(cfg: &DpdConfig, spec: &NetworkSpec, data: &Dataset, train_cfg: &TrainConfig) -> Result<FitResult> {
    let theta0 = spec.glorot_init(train_cfg.seed);
    fit_from(cfg, spec, data, train_cfg, theta0)
}

/// [`fit`] from a given initial `theta`.
pub fn fit_from(
    cfg: &DpdConfig,
    spec: &NetworkSpec,
    data: &Dataset,
    train_cfg: &TrainConfig,
    theta0: ParamVector,
) -> Result<FitResult> {
    train_cfg.validate()?;
    data.require_non_empty()?;
    spec.check_params(&theta0)?;
    dpd::check_data_dim(spec, data)?;

    let mut theta = theta0;
    let r = dpd::residuals(spec, &theta, data)?;
    let mut sigma = mad_scale(&r, cfg.sigma_floor());
    let initial_loss = cfg.loss_from_residuals(&r, sigma)?;
    let mut prev = initial_loss;
    let mut trace = Vec::new();
    let mut violations = 0;
    for k in 0..train_cfg.max_outer {
        let candidate = adam_theta_update(cfg, spec, &theta, sigma, data, train_cfg, derive_seed(train_cfg.seed, k as u64 + 1))?;
        let mut r = dpd::residuals(spec, &candidate, data)?;
        if train_cfg.descent_guard && !(cfg.loss_from_residuals(&r, sigma)? <= prev) {
            r = dpd::residuals(spec, &theta, data)?;
        } else {
            theta = candidate;
        }
        sigma = sigma_step(cfg, &r, sigma, train_cfg)?;
        let loss = cfg.loss_from_residuals(&r, sigma)?;
        let descent_ok = loss <= prev + DESCENT_SLACK;
        if !descent_ok {
            violations += 1;
        }
        trace.push(OuterRecord {
            loss,
            sigma: Some(sigma),
            descent_ok,
        });
        if !(prev - loss >= train_cfg.tolerance) {
            break;
        }
        prev = loss;
    }
    Ok(FitResult {
        theta,
        sigma: Some(sigma),
        initial_loss,
        outer_iters: trace.len(),
        trace,
        descent_violations: violations,
    })
}

/// Network predictions for every row of `xs` (row-major, width `p`).
pub fn predict(spec: &NetworkSpec, theta: &ParamVector, xs: &[f64]) -> Result<Vec<f64>> {
    spec.check_params(theta)?;
    let p = spec.input_dim();
    if xs.len() % p != 0 {
        return Err(Error::Dimension {
            layer: "input layer".into(),
            expected: p,
            actual: xs.len() % p,
        });
    }
    let mut scratch = Scratch::new(spec);
    Ok(xs
        .chunks_exact(p)
        .map(|x| spec.forward_with(theta.as_slice(), x, &mut scratch))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn linear_data(n: usize, seed: u64, noise: f64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise).unwrap();
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let ys = xs.iter().map(|x| 1.0 + 2.0 * x + normal.sample(&mut rng)).collect();
        Dataset::new(1, xs, ys).unwrap()
    }

    #[test]
    fn mad_examples() {
        assert_eq!(mad_scale(&[0.3, 0.3, 0.3], 1e-3), 1e-3);
        assert!((mad_scale(&[-1.0, 0.0, 1.0], 1e-3) - 1.4826).abs() < 1e-15);
        let r = [0.2, -1.3, 0.8, 2.2, -0.1, 0.05];
        let scaled: Vec<f64> = r.iter().map(|x| 3.5 * x).collect();
        assert!((mad_scale(&scaled, 1e-3) - 3.5 * mad_scale(&r, 1e-3)).abs() < 1e-12);
    }

    #[test]
    fn qn_beta_zero_is_rms() {
        let cfg = DpdConfig::gaussian(0.0).unwrap();
        let r = [0.4, -1.1, 0.25, 2.0, -0.6];
        let rms = (r.iter().map(|x| x * x).sum::<f64>() / 5.0).sqrt();
        for init in [0.01, 0.5, 5.0, 100.0] {
            let s = minimize_sigma_qn(&cfg, &r, init, &TrainConfig::default()).unwrap();
            assert!((s - rms).abs() < 1e-6, "init {init}: {s} vs {rms}");
        }
    }

    #[test]
    fn qn_zero_residuals_hits_floor() {
        for beta in [0.0, 0.5] {
            let cfg = DpdConfig::gaussian(beta).unwrap();
            let s = minimize_sigma_qn(&cfg, &[0.0; 6], 1.0, &TrainConfig::default()).unwrap();
            assert_eq!(s, cfg.sigma_floor());
        }
    }

    #[test]
    fn qn_does_not_increase_loss() {
        let cfg = DpdConfig::new(0.7, ErrorModel::Logistic).unwrap();
        let r = [0.4, -1.1, 0.25, 2.0, -0.6, 30.0];
        for init in [0.01, 1.0, 50.0] {
            let before = cfg.loss_from_residuals(&r, init).unwrap();
            let s = minimize_sigma_qn(&cfg, &r, init, &TrainConfig::default()).unwrap();
            assert!(cfg.loss_from_residuals(&r, s).unwrap() <= before);
            assert!(s >= cfg.sigma_floor());
        }
    }

    #[test]
    fn fixed_point_examples() {
        let r = [0.4, -1.1, 0.25, 2.0, -0.6];
        let mean_r2 = r.iter().map(|x| x * x).sum::<f64>() / 5.0;
        match gaussian_fixed_point(&r, 3.0, 0.0, 1e-3) {
            FixedPoint::Converged(s) => assert!((s * s - mean_r2).abs() < 1e-14),
            other => panic!("{other:?}"),
        }
        let cfg = DpdConfig::gaussian(0.5).unwrap();
        let FixedPoint::Converged(s) = gaussian_fixed_point(&r, 1.0, 0.5, 1e-3) else {
            panic!("fixed point failed");
        };
        assert!(cfg.grad_sigma_from_residuals(&r, s).unwrap().abs() < 1e-6);
    }

    #[test]
    fn fixed_point_downweights_gross_outlier() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let normal = Normal::new(0.0, 0.3).unwrap();
        let clean: Vec<f64> = (0..60).map(|_| normal.sample(&mut rng)).collect();
        let mut dirty = clean.clone();
        dirty.push(1e6);
        let FixedPoint::Converged(a) = gaussian_fixed_point(&clean, 1.0, 0.5, 1e-3) else { panic!() };
        let FixedPoint::Converged(b) = gaussian_fixed_point(&dirty, 1.0, 0.5, 1e-3) else { panic!() };
        assert!(((b - a) / a).abs() < 0.05, "{a} vs {b}");
    }

    #[test]
    fn fixed_point_rejects_other_models() {
        let cfg = DpdConfig::new(0.5, ErrorModel::Laplace).unwrap();
        let spec = NetworkSpec::linear(1).unwrap();
        let data = linear_data(10, 1, 0.1);
        let theta = spec.glorot_init(0);
        let err = sigma_update_fixed_point(&cfg, &spec, &theta, &data, 1.0, &TrainConfig::default());
        assert!(matches!(err, Err(Error::UnsupportedModel { .. })));
    }

    #[test]
    fn qn_agrees_with_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let r: Vec<f64> = (0..80).map(|_| normal.sample(&mut rng)).collect();
        let cfg = DpdConfig::gaussian(0.5).unwrap();
        let qn = minimize_sigma_qn(&cfg, &r, 0.3, &TrainConfig::default()).unwrap();
        let FixedPoint::Converged(fp) = gaussian_fixed_point(&r, 0.3, 0.5, 1e-3) else { panic!() };
        assert!((qn - fp).abs() < 1e-6, "{qn} vs {fp}");
    }

    #[test]
    fn adam_at_critical_point_is_stationary() {
        let spec = NetworkSpec::linear(1).unwrap();
        let theta = ParamVector::new(vec![1.0, 2.0]);
        let xs = vec![0.0, 0.5, 1.0];
        let ys = xs.iter().map(|x| 1.0 + 2.0 * x).collect();
        let data = Dataset::new(1, xs, ys).unwrap();
        let cfg = DpdConfig::gaussian(0.3).unwrap();
        let out = adam_theta_update(&cfg, &spec, &theta, 0.5, &data, &TrainConfig::default(), 3).unwrap();
        for (a, b) in out.as_slice().iter().zip(theta.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_full_batch_descends_and_is_deterministic() {
        let spec = NetworkSpec::linear(1).unwrap();
        let data = linear_data(40, 2, 0.1);
        let cfg = DpdConfig::gaussian(0.2).unwrap();
        let tc = TrainConfig::default().full_batch();
        let theta = spec.glorot_init(4);
        let eta = dpd::EtaPoint::new(theta.clone(), 0.5, &cfg).unwrap();
        let before = dpd::loss(&cfg, &spec, &eta, &data).unwrap();
        let out = adam_theta_update(&cfg, &spec, &theta, 0.5, &data, &tc, 1).unwrap();
        let after = dpd::loss(&cfg, &spec, &dpd::EtaPoint::new(out.clone(), 0.5, &cfg).unwrap(), &data).unwrap();
        assert!(after <= before);
        let stochastic = TrainConfig { batch_size: 8, ..TrainConfig::default() };
        let a = adam_theta_update(&cfg, &spec, &theta, 0.5, &data, &stochastic, 77).unwrap();
        let b = adam_theta_update(&cfg, &spec, &theta, 0.5, &data, &stochastic, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn beta_zero_fit_matches_least_squares() {
        let data = linear_data(60, 3, 0.2);
        let spec = NetworkSpec::linear(1).unwrap();
        let cfg = DpdConfig::gaussian(0.0).unwrap();
        let tc = TrainConfig {
            max_outer: 200,
            tolerance: 1e-12,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        }
        .full_batch();
        let fit = fit(&cfg, &spec, &data, &tc).unwrap();
        // normal equations for y = a + b x
        let n = data.len() as f64;
        let (sx, sy) = (data.xs().iter().sum::<f64>(), data.ys().iter().sum::<f64>());
        let sxx: f64 = data.xs().iter().map(|x| x * x).sum();
        let sxy: f64 = data.rows().map(|(x, y)| x[0] * y).sum();
        let b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let a = (sy - b * sx) / n;
        let preds = predict(&spec, &fit.theta, data.xs()).unwrap();
        let gap = data.xs().iter().zip(&preds).map(|(x, p)| (a + b * x - p).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-3, "gap {gap}");
        assert_eq!(fit.descent_violations, 0);
    }

    #[test]
    fn predict_matches_forward_and_permutes() {
        let spec = NetworkSpec::uniform(2, &[3], Activation::Tanh).unwrap();
        let theta = spec.glorot_init(8);
        let xs = vec![0.1, 0.2, -0.5, 1.0, 2.0, 0.0];
        let preds = predict(&spec, &theta, &xs).unwrap();
        assert_eq!(preds[1], spec.forward(&theta, &xs[2..4]).unwrap());
        let swapped = vec![2.0, 0.0, -0.5, 1.0, 0.1, 0.2];
        let p2 = predict(&spec, &theta, &swapped).unwrap();
        assert_eq!(p2, vec![preds[2], preds[1], preds[0]]);
        assert!(predict(&spec, &theta, &xs[..5]).is_err());
    }

    #[test]
    fn trace_csv_layout() {
        let data = linear_data(20, 4, 0.1);
        let spec = NetworkSpec::linear(1).unwrap();
        let cfg = DpdConfig::gaussian(0.3).unwrap();
        let tc = TrainConfig { max_outer: 3, epochs_per_outer: 5, ..TrainConfig::default() };
        let fit = fit(&cfg, &spec, &data, &tc).unwrap();
        let csv = fit.trace_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("outer,loss,sigma,descent_ok"));
        assert_eq!(lines.count(), fit.outer_iters);
        assert!(fit.sigma.unwrap() >= cfg.sigma_floor());
    }
}
