//! Standardized (mean 0, variance 1) error densities, their scores,
//! the weighted scores `psi_1`, `psi_2` and the moments
//! `C^(beta)_{i,j} = int s^i u(s)^j f(s)^(1+beta) ds`.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::quadrature;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Truncation radius for the C-constant integrals, in standard units.
pub const DEFAULT_RADIUS: f64 = 40.0;
const TAIL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ErrorModel {
    Gaussian,
    /// Laplace with scale `1/sqrt(2)`.
    Laplace,
    /// Logistic with scale `sqrt(3)/pi`.
    Logistic,
}

fn logistic_scale() -> f64 {
    3f64.sqrt() / PI
}

impl ErrorModel {
    pub const ALL: [ErrorModel; 3] = [ErrorModel::Gaussian, ErrorModel::Laplace, ErrorModel::Logistic];

    pub fn log_density(self, s: f64) -> f64 {
        match self {
            ErrorModel::Gaussian => -0.5 * s * s - LN_SQRT_2PI,
            ErrorModel::Laplace => -SQRT_2 * s.abs() - 0.5 * std::f64::consts::LN_2,
            ErrorModel::Logistic => {
                // f(s) = sech^2(s / 2b) / (4b)
                let b = logistic_scale();
                let a = (s / (2.0 * b)).abs();
                // ln cosh(a) = a + ln(1 + e^{-2a}) - ln 2
                let ln_cosh = a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2;
                -(4.0 * b).ln() - 2.0 * ln_cosh
            }
        }
    }

    pub fn density(self, s: f64) -> f64 {
        self.log_density(s).exp()
    }

    /// A measurable selection `u(s)` of the derivative of `ln f`; the Laplace
    /// kink takes the midpoint `u(0) = 0`.
    pub fn score(self, s: f64) -> f64 {
        match self {
            ErrorModel::Gaussian => -s,
            ErrorModel::Laplace => {
                if s > 0.0 {
                    -SQRT_2
                } else if s < 0.0 {
                    SQRT_2
                } else {
                    0.0
                }
            }
            ErrorModel::Logistic => -(PI / 3f64.sqrt()) * (PI * s / (2.0 * 3f64.sqrt())).tanh(),
        }
    }

    /// `f(s)^beta`, with `f^0 = 1` everywhere.
    pub fn density_pow(self, beta: f64, s: f64) -> f64 {
        if beta == 0.0 {
            1.0
        } else {
            (beta * self.log_density(s)).exp()
        }
    }

    /// `psi_1(s) = u(s) f(s)^beta`.
    pub fn psi1(self, beta: f64, s: f64) -> f64 {
        if beta == 0.0 {
            return self.score(s);
        }
        let w = self.density_pow(beta, s);
        if w == 0.0 {
            0.0
        } else {
            self.score(s) * w
        }
    }

    /// `psi_2(s) = (1 + s u(s)) f(s)^beta`.
    pub fn psi2(self, beta: f64, s: f64) -> f64 {
        if beta == 0.0 {
            return 1.0 + s * self.score(s);
        }
        let w = self.density_pow(beta, s);
        if w == 0.0 {
            0.0
        } else {
            (1.0 + s * self.score(s)) * w
        }
    }

    pub fn is_symmetric(self) -> bool {
        true
    }

    /// `C^(beta)_{i,j}`. Gaussian `(0,0)`, `(0,2)`, `(2,2)`, `(1,2)` use closed
    /// forms; everything else is integrated numerically.
    pub fn c_constant(self, i: u32, j: u32, beta: f64) -> Result<f64> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!("beta must be a finite non-negative number, got {beta}")));
        }
        if self == ErrorModel::Gaussian {
            let c00 = (2.0 * PI).powf(-0.5 * beta) / (1.0 + beta).sqrt();
            match (i, j) {
                (0, 0) => return Ok(c00),
                (0, 2) => return Ok(c00 / (1.0 + beta)),
                (2, 2) => return Ok(3.0 * c00 / (1.0 + beta).powi(2)),
                (1, 2) => return Ok(0.0),
                _ => {}
            }
        }
        self.c_constant_quadrature(i, j, beta)
    }

    /// Numerical `C^(beta)_{i,j}` regardless of closed forms.
    pub fn c_constant_quadrature(self, i: u32, j: u32, beta: f64) -> Result<f64> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!("beta must be a finite non-negative number, got {beta}")));
        }
        let integrand = |s: f64| {
            let w = ((1.0 + beta) * self.log_density(s)).exp();
            if w == 0.0 {
                0.0
            } else {
                s.powi(i as i32) * self.score(s).powi(j as i32) * w
            }
        };
        let mut radius = DEFAULT_RADIUS;
        while integrand(radius).abs() + integrand(-radius).abs() > TAIL_TOL * 1e-3 {
            radius *= 1.5;
            if radius > 1e4 {
                return Err(Error::Quadrature { i, j, beta });
            }
        }
        // split at the origin, where the Laplace score jumps
        let left = quadrature::integrate(integrand, -radius, 0.0, 1e-14);
        let right = quadrature::integrate(integrand, 0.0, radius, 1e-14);
        let value = left.value + right.value;
        if !(left.converged && right.converged && value.is_finite()) {
            return Err(Error::Quadrature { i, j, beta });
        }
        Ok(value)
    }
}

impl fmt::Display for ErrorModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorModel::Gaussian => "gaussian",
            ErrorModel::Laplace => "laplace",
            ErrorModel::Logistic => "logistic",
        })
    }
}

impl FromStr for ErrorModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(ErrorModel::Gaussian),
            "laplace" => Ok(ErrorModel::Laplace),
            "logistic" => Ok(ErrorModel::Logistic),
            other => Err(Error::Config(format!("unknown error model `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn densities_at_zero() {
        assert!((ErrorModel::Gaussian.density(0.0) - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
        assert!((ErrorModel::Laplace.density(0.0) - 1.0 / SQRT_2).abs() < 1e-15);
        assert!((ErrorModel::Logistic.density(0.0) - PI / (4.0 * 3f64.sqrt())).abs() < 1e-15);
        assert!((ErrorModel::Logistic.density(0.0) - 0.45345).abs() < 1e-5);
    }

    #[test]
    fn standardization_moments() {
        for model in ErrorModel::ALL {
            let mass = model.c_constant_quadrature(0, 0, 0.0).unwrap();
            let mean = model.c_constant_quadrature(1, 0, 0.0).unwrap();
            let var = model.c_constant_quadrature(2, 0, 0.0).unwrap();
            assert!((mass - 1.0).abs() < 1e-8, "{model} mass {mass}");
            assert!(mean.abs() < 1e-8, "{model} mean {mean}");
            assert!((var - 1.0).abs() < 1e-8, "{model} variance {var}");
        }
    }

    #[test]
    fn scores() {
        assert_eq!(ErrorModel::Gaussian.score(3.0), -3.0);
        assert_eq!(ErrorModel::Laplace.score(0.0), 0.0);
        assert_eq!(ErrorModel::Laplace.score(-2.0), SQRT_2);
        let mut prev = f64::INFINITY;
        for k in 0..=4000 {
            let u = ErrorModel::Logistic.score(-20.0 + 0.01 * k as f64);
            assert!(u <= prev);
            prev = u;
        }
    }

    #[test]
    fn score_is_log_density_derivative() {
        for model in ErrorModel::ALL {
            for &s in &[-2.3, -0.4, 0.7, 1.9] {
                let h = 1e-6;
                let fd = (model.log_density(s + h) - model.log_density(s - h)) / (2.0 * h);
                assert!((fd - model.score(s)).abs() < 1e-7, "{model} at {s}");
            }
        }
    }

    #[test]
    fn gaussian_psi_closed_forms() {
        let g = ErrorModel::Gaussian;
        for &beta in &[0.1, 0.5, 1.0] {
            for &s in &[-3.0, -0.5, 0.0, 1.0, 2.5] {
                let c = (2.0 * PI).powf(-beta / 2.0) * (-beta * s * s / 2.0).exp();
                assert!((g.psi1(beta, s) - (-c * s)).abs() < 1e-15);
                assert!((g.psi2(beta, s) - c * (1.0 - s * s)).abs() < 1e-15);
            }
        }
        let v = g.psi1(1.0, 1.0);
        assert!((v - (-(2.0 * PI).powf(-0.5) * (-0.5f64).exp())).abs() < 1e-15);
        assert!((v + 0.24197).abs() < 1e-5);
        for model in ErrorModel::ALL {
            assert_eq!(model.psi2(0.0, 0.0), 1.0);
        }
    }

    #[test]
    fn c00_values() {
        let c = ErrorModel::Gaussian.c_constant(0, 0, 1.0).unwrap();
        assert!((c - (2.0 * PI).powf(-0.5) / 2f64.sqrt()).abs() < 1e-15);
        assert!((c - 0.28209).abs() < 1e-5);
        for model in ErrorModel::ALL {
            assert!((model.c_constant(0, 0, 0.0).unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn negative_beta_is_rejected() {
        assert!(ErrorModel::Laplace.c_constant(0, 0, -0.1).is_err());
    }

    #[test]
    fn psi_functions_redescend_for_positive_beta() {
        for model in ErrorModel::ALL {
            let beta = 0.5;
            let grid: Vec<f64> = (0..=20000).map(|k| -100.0 + 0.01 * k as f64).collect();
            let max1 = grid.iter().map(|&s| model.psi1(beta, s).abs()).fold(0.0, f64::max);
            let max2 = grid.iter().map(|&s| model.psi2(beta, s).abs()).fold(0.0, f64::max);
            assert!(max1.is_finite() && max2.is_finite());
            for s in [-100.0, 100.0] {
                assert!(model.psi1(beta, s).abs() < 1e-6 * max1);
                assert!(model.psi2(beta, s).abs() < 1e-6 * max2);
            }
        }
        // likelihood score is unbounded
        assert_eq!(ErrorModel::Gaussian.psi1(0.0, 100.0).abs(), 100.0);
    }
}
