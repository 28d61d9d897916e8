//! Adaptive composite Gauss-Legendre quadrature.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// found by Newton iteration on `P_n` from the Chebyshev-like initial guesses.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn rule64() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(64))
}

fn panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let (nodes, weights) = rule64();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    half * nodes
        .iter()
        .zip(weights)
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
}

/// Outcome of [`integrate`].
#[derive(Clone, Copy, Debug)]
pub struct Integral {
    pub value: f64,
    pub converged: bool,
}

/// Integrates `f` over `[a, b]` with 64-point panels, bisecting any panel
/// whose estimate disagrees with its two halves by more than `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Integral {
    let whole = panel(&f, a, b);
    let mut converged = true;
    let value = refine(&f, a, b, whole, tol, 0, &mut converged);
    Integral { value, converged }
}

fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    depth: usize,
    converged: &mut bool,
) -> f64 {
    let mid = 0.5 * (a + b);
    let left = panel(f, a, mid);
    let right = panel(f, mid, b);
    let both = left + right;
    if (both - whole).abs() <= tol.max(1e-15 * both.abs()) {
        return both;
    }
    if depth >= 40 {
        *converged = false;
        return both;
    }
    refine(f, a, mid, left, 0.5 * tol, depth + 1, converged)
        + refine(f, mid, b, right, 0.5 * tol, depth + 1, converged)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two_and_nodes_are_symmetric() {
        for n in [1, 2, 5, 16, 64] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13, "n = {n}");
            for i in 0..n {
                assert!((x[i] + x[n - 1 - i]).abs() < 1e-15);
            }
        }
        let (x, _) = gauss_legendre(2);
        assert!((x[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn exact_for_high_degree_polynomials() {
        // 64 points integrate degree 127 exactly; x^100 over [-1, 1] = 2/101
        let r = integrate(|x| x.powi(100), -1.0, 1.0, 1e-14);
        assert!((r.value - 2.0 / 101.0).abs() < 1e-14);
    }

    #[test]
    fn gaussian_integral() {
        let r = integrate(|x| (-0.5 * x * x).exp(), -40.0, 40.0, 1e-14);
        assert!(r.converged);
        assert!((r.value - (2.0 * PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn handles_kinks_by_bisection() {
        let r = integrate(|x: f64| (-x.abs()).exp(), -1.0, 2.0, 1e-13);
        let exact = 2.0 - (-1.0f64).exp() - (-2.0f64).exp();
        assert!((r.value - exact).abs() < 1e-12);
    }
}
