//! Influence functions of the minimum-DPD functionals of `theta` and `sigma`
//! and of the fitted predictor, evaluated at the model distribution for a
//! point contamination `t` in the response of observation `i`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::dpd::DEFAULT_SIGMA_FLOOR;
use crate::error::{Error, Result};
use crate::error_model::ErrorModel;
use crate::nn::{Activation, GradSelection, NetworkSpec, ParamVector};

/// Relative eigenvalue cutoff for the pseudo-inverse of `J^T J`.
pub const DEFAULT_PINV_TOL: f64 = 1e-10;
/// Relative projection residual below which a feature value is admissible.
pub const ADMISSIBLE_TOL: f64 = 1e-8;
pub const DEFAULT_SHARPNESS: [f64; 4] = [1.0, 10.0, 100.0, 1000.0];

/// Everything an influence function at the model depends on.
#[derive(Clone, Debug)]
pub struct IfSetup {
    pub spec: NetworkSpec,
    pub model: ErrorModel,
    pub theta: ParamVector,
    pub sigma: f64,
    /// Design points, row-major with `spec.input_dim()` columns.
    pub design: Vec<f64>,
    pub beta: f64,
    /// 1-based index of the contaminated observation.
    pub index: usize,
    pub pinv_tol: f64,
}

impl IfSetup {
    pub fn new(
        spec: NetworkSpec,
        model: ErrorModel,
        theta: ParamVector,
        sigma: f64,
        design: Vec<f64>,
        beta: f64,
        index: usize,
    ) -> Result<Self> {
        spec.check_params(&theta)?;
        let p = spec.input_dim();
        if design.is_empty() || design.len() % p != 0 {
            return Err(Error::Dimension {
                layer: "design points".into(),
                expected: p,
                actual: design.len() % p,
            });
        }
        let n = design.len() / p;
        if index == 0 || index > n {
            return Err(Error::Config(format!("contamination index must lie in 1..={n}, got {index}")));
        }
        if !(sigma >= DEFAULT_SIGMA_FLOOR && sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be at least {DEFAULT_SIGMA_FLOOR}, got {sigma}")));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::BetaOutOfRange(beta));
        }
        if !model.is_symmetric() {
            return Err(Error::UnsupportedModel {
                op: "influence functions",
                required: "a symmetric error model",
            });
        }
        Ok(IfSetup {
            spec,
            model,
            theta,
            sigma,
            design,
            beta,
            index,
            pinv_tol: DEFAULT_PINV_TOL,
        })
    }

    pub fn with_pinv_tol(mut self, tol: f64) -> Self {
        self.pinv_tol = tol;
        self
    }

    pub fn n(&self) -> usize {
        self.design.len() / self.spec.input_dim()
    }

    pub fn x(&self, k: usize) -> &[f64] {
        let p = self.spec.input_dim();
        &self.design[k * p..(k + 1) * p]
    }

    /// Example with one input, one hidden unit of activation `act`, Gaussian
    /// errors, 50 equispaced design points on `[-10, 20]`, weight and bias of
    /// the hidden unit 1, output bias 2, output weight 1.5 and `sigma = 0.1`.
    pub fn shallow_example(act: Activation, beta: f64, index: usize) -> Result<Self> {
        let spec = NetworkSpec::uniform(1, &[1], act)?;
        // layout: hidden weight, hidden bias, output bias, output weight
        let theta = ParamVector::new(vec![1.0, 1.0, 2.0, 1.5]);
        let design = (0..50).map(|k| -10.0 + 30.0 * k as f64 / 49.0).collect();
        IfSetup::new(spec, ErrorModel::Gaussian, theta, 0.1, design, beta, index)
    }

    /// Sigmoid preset (`ex31` on the command line).
    pub fn sigmoid_example(beta: f64, index: usize) -> Result<Self> {
        Self::shallow_example(Activation::Sigmoid, beta, index)
    }

    /// ReLU preset (`ex32` on the command line).
    pub fn relu_example(beta: f64, index: usize) -> Result<Self> {
        Self::shallow_example(Activation::Relu, beta, index)
    }

    /// Same setup on another architecture with the same parameter layout.
    fn with_spec(&self, spec: NetworkSpec) -> IfSetup {
        IfSetup {
            spec,
            ..self.clone()
        }
    }
}

/// `n x d` matrix whose row `k` is `grad_theta mu(x_k)` (Heaviside-half at
/// ReLU kinks).
pub fn jacobian_matrix(setup: &IfSetup) -> Result<DMatrix<f64>> {
    let n = setup.n();
    let d = setup.spec.param_dim();
    let mut jac = DMatrix::zeros(n, d);
    for k in 0..n {
        let g = setup.spec.grad_theta(&setup.theta, setup.x(k), GradSelection::Half)?;
        for (c, v) in g.into_iter().enumerate() {
            jac[(k, c)] = v;
        }
    }
    Ok(jac)
}

/// Precomputed quantities shared by every `t` of a curve.
#[derive(Clone, Debug)]
pub struct Influence {
    setup: IfSetup,
    /// Orthonormal basis of the row space of the Jacobian, `d x r`.
    basis: DMatrix<f64>,
    mu_i: f64,
    /// `[J^T J]^+ grad mu(x_i)`.
    direction: DVector<f64>,
    c00: f64,
    c02: f64,
    c22_tilde: f64,
}

impl Influence {
    pub fn new(setup: IfSetup) -> Result<Self> {
        let jac = jacobian_matrix(&setup)?;
        let svd = jac.svd(false, true);
        let v_t = svd.v_t.expect("requested V^T");
        let s_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&k| {
                let s = svd.singular_values[k];
                s > 0.0 && s * s >= setup.pinv_tol * s_max * s_max
            })
            .collect();
        let d = setup.spec.param_dim();
        let mut basis = DMatrix::zeros(d, keep.len());
        for (col, &k) in keep.iter().enumerate() {
            basis.set_column(col, &v_t.row(k).transpose());
        }
        let i = setup.index - 1;
        let grad_i = DVector::from_vec(setup.spec.grad_theta(&setup.theta, setup.x(i), GradSelection::Half)?);
        let coords = basis.transpose() * &grad_i;
        let scaled = DVector::from_iterator(
            keep.len(),
            keep.iter().zip(coords.iter()).map(|(&k, c)| c / svd.singular_values[k].powi(2)),
        );
        let direction = &basis * scaled;
        let mu_i = setup.spec.forward(&setup.theta, setup.x(i))?;
        let (model, beta) = (setup.model, setup.beta);
        let c00 = model.c_constant(0, 0, beta)?;
        let c02 = model.c_constant(0, 2, beta)?;
        let c22 = model.c_constant(2, 2, beta)?;
        let c22_tilde = c22 - (1.0 - beta) / (1.0 + beta) * c00;
        Ok(Influence {
            setup,
            basis,
            mu_i,
            direction,
            c00,
            c02,
            c22_tilde,
        })
    }

    pub fn setup(&self) -> &IfSetup {
        &self.setup
    }

    /// `mu(x_i, theta)` at the contaminated observation.
    pub fn mu_i(&self) -> f64 {
        self.mu_i
    }

    /// Numerical rank of the Jacobian after truncation.
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    fn standardized(&self, t: f64) -> f64 {
        (t - self.mu_i) / self.setup.sigma
    }

    fn theta_scale(&self, t: f64) -> f64 {
        let s = &self.setup;
        -(s.sigma / self.c02) * s.model.psi1(s.beta, self.standardized(t))
    }

    /// Minimum-norm influence function of the `theta` functional.
    pub fn if_theta(&self, t: f64) -> Vec<f64> {
        let a = self.theta_scale(t);
        self.direction.iter().map(|v| a * v).collect()
    }

    /// Influence function of the `sigma` functional.
    pub fn if_sigma(&self, t: f64) -> Result<f64> {
        if !(self.c22_tilde > 0.0) {
            return Err(Error::DegenerateNormalizer(self.c22_tilde));
        }
        let s = &self.setup;
        let psi2 = s.model.psi2(s.beta, self.standardized(t));
        Ok(-(s.sigma / (s.n() as f64 * self.c22_tilde)) * (psi2 - s.beta * self.c00 / (1.0 + s.beta)))
    }

    /// `H_n(x) = grad mu(x)^T [J^T J]^+ grad mu(x_i)`.
    pub fn h_n(&self, x: &[f64]) -> Result<f64> {
        let g = self.setup.spec.grad_theta(&self.setup.theta, x, GradSelection::Half)?;
        Ok(g.iter().zip(self.direction.iter()).map(|(a, b)| a * b).sum())
    }

    /// Influence function of the predictor at `x`; for non-admissible `x`
    /// only the minimum-norm part.
    pub fn if_predictor(&self, t: f64, x: &[f64]) -> Result<f64> {
        Ok(self.theta_scale(t) * self.h_n(x)?)
    }

    /// Whether `grad mu(x)` lies in the row space of the Jacobian, with the
    /// relative norm of its projection residual.
    pub fn admissible_check(&self, x: &[f64]) -> Result<(bool, f64)> {
        let g = DVector::from_vec(self.setup.spec.grad_theta(&self.setup.theta, x, GradSelection::Half)?);
        let norm = g.norm();
        if norm == 0.0 {
            return Ok((true, 0.0));
        }
        let proj = &self.basis * (self.basis.transpose() * &g);
        let residual = (g - proj).norm() / norm;
        Ok((residual < ADMISSIBLE_TOL, residual))
    }

    pub fn theta_curve(&self, grid: &[f64]) -> Result<IfCurve> {
        IfCurve::new(grid.to_vec(), grid.iter().map(|&t| self.if_theta(t)).collect())
    }

    pub fn sigma_curve(&self, grid: &[f64]) -> Result<IfCurve> {
        let values = grid.iter().map(|&t| self.if_sigma(t).map(|v| vec![v])).collect::<Result<_>>()?;
        IfCurve::new(grid.to_vec(), values)
    }

    pub fn predictor_curve(&self, grid: &[f64], x: &[f64]) -> Result<IfCurve> {
        let h = self.h_n(x)?;
        IfCurve::new(grid.to_vec(), grid.iter().map(|&t| vec![self.theta_scale(t) * h]).collect())
    }
}

pub fn if_theta(setup: &IfSetup, t: f64) -> Result<Vec<f64>> {
    Ok(Influence::new(setup.clone())?.if_theta(t))
}

pub fn if_sigma(setup: &IfSetup, t: f64) -> Result<f64> {
    Influence::new(setup.clone())?.if_sigma(t)
}

pub fn if_predictor(setup: &IfSetup, t: f64, x: &[f64]) -> Result<f64> {
    Influence::new(setup.clone())?.if_predictor(t, x)
}

pub fn admissible_check(setup: &IfSetup, x: &[f64]) -> Result<(bool, f64)> {
    Influence::new(setup.clone())?.admissible_check(x)
}

/// An influence function tabulated on a grid of contamination points.
#[derive(Clone, Debug, PartialEq)]
pub struct IfCurve {
    pub t: Vec<f64>,
    /// One vector per grid point; length 1 for scalar functionals.
    pub values: Vec<Vec<f64>>,
}

impl IfCurve {
    pub fn new(t: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if t.len() != values.len() {
            return Err(Error::Dimension {
                layer: "influence curve".into(),
                expected: t.len(),
                actual: values.len(),
            });
        }
        if t.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("t-grid must be strictly increasing".into()));
        }
        if let Some(k) = values.iter().position(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::Config(format!("influence value at t = {} is not finite", t[k])));
        }
        Ok(IfCurve { t, values })
    }

    pub fn is_scalar(&self) -> bool {
        self.values.first().is_some_and(|v| v.len() == 1)
    }

    /// Euclidean norm of the value at each grid point.
    pub fn norms(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).collect()
    }

    /// Largest norm over the grid.
    pub fn gross_error_sensitivity(&self) -> f64 {
        self.norms().into_iter().fold(0.0, f64::max)
    }

    /// Largest componentwise difference to a curve on the same grid.
    pub fn sup_gap(&self, other: &IfCurve) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    /// `t,value` for scalar curves, `t,component_index,value` (0-based
    /// component) otherwise.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if self.is_scalar() {
            out.push_str("t,value\n");
            for (t, v) in self.t.iter().zip(&self.values) {
                let _ = writeln!(out, "{t:.17e},{:.17e}", v[0]);
            }
        } else {
            out.push_str("t,component_index,value\n");
            for (t, v) in self.t.iter().zip(&self.values) {
                for (c, x) in v.iter().enumerate() {
                    let _ = writeln!(out, "{t:.17e},{c},{x:.17e}");
                }
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// `count` equispaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count).map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64).collect(),
    }
}

/// Sup-gaps between the curves of a smoothed network and the direct
/// Heaviside-half curves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothingGap {
    pub m: f64,
    pub theta: f64,
    pub sigma: f64,
    pub predictor: f64,
}

impl SmoothingGap {
    pub fn max(&self) -> f64 {
        self.theta.max(self.sigma).max(self.predictor)
    }
}

/// Curves of the ReLU network computed directly with the Heaviside-half
/// subgradient, and the convergence of the softplus-smoothed curves to them.
#[derive(Clone, Debug)]
pub struct ReluLimit {
    pub theta: IfCurve,
    pub sigma: IfCurve,
    pub predictor: IfCurve,
    pub gaps: Vec<SmoothingGap>,
}

impl ReluLimit {
    /// Whether the predictor and sigma gaps are non-increasing along the
    /// sharpness sequence. The `theta` gap is left out: the minimum-norm
    /// `theta` influence jumps wherever the Jacobian's numerical rank
    /// changes, which happens when a ReLU unit's homogeneity makes columns of
    /// the direct Jacobian collinear.
    pub fn gaps_non_increasing(&self) -> bool {
        self.gaps
            .windows(2)
            .all(|w| w[1].predictor <= w[0].predictor && w[1].sigma <= w[0].sigma)
    }

    pub fn final_gap(&self) -> Option<f64> {
        self.gaps.last().map(SmoothingGap::max)
    }
}

/// Compares the influence curves of `smooth_network(spec, m)` for each `m`
/// against the direct ReLU curves. The predictor curve is taken at `x`.
pub fn if_relu_limit(setup: &IfSetup, grid: &[f64], x: &[f64], sharpness: &[f64]) -> Result<ReluLimit> {
    if !setup.spec.has_relu() {
        return Err(Error::Config("the network has no ReLU layer to smooth".into()));
    }
    if sharpness.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("sharpness sequence must be increasing".into()));
    }
    let direct = Influence::new(setup.clone())?;
    let theta = direct.theta_curve(grid)?;
    let sigma = direct.sigma_curve(grid)?;
    let predictor = direct.predictor_curve(grid, x)?;
    let mut gaps = Vec::with_capacity(sharpness.len());
    for &m in sharpness {
        let smooth = Influence::new(setup.with_spec(setup.spec.smooth_network(m)?))?;
        gaps.push(SmoothingGap {
            m,
            theta: smooth.theta_curve(grid)?.sup_gap(&theta),
            sigma: smooth.sigma_curve(grid)?.sup_gap(&sigma),
            predictor: smooth.predictor_curve(grid, x)?.sup_gap(&predictor),
        });
    }
    Ok(ReluLimit {
        theta,
        sigma,
        predictor,
        gaps,
    })
}
