//! Fully connected regression networks with a scalar linear output.
//!
//! Parameters live in one flat [`ParamVector`] with a fixed layout: for each
//! hidden layer `l` the weight matrix `W_l` (shape `K_l x K_{l-1}`) stacked
//! column by column, then the bias `b_l`, and finally the output weights
//! `(w_0^out, w_1^out, ..., w_{K_L}^out)` with the output bias first.
//!
//! Entry `(k, j)` of `W_l`, the weight from unit `j` of the previous layer to
//! unit `k` of layer `l`, sits at `offset_l + j * K_l + k`.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erf;

use crate::error::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Subgradient picked at activation kinks (only ReLU has one).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GradSelection {
    /// `ReLU'(0) = 0`, the usual autodiff convention.
    #[default]
    Zero,
    /// `ReLU'(0) = 1/2`, the value of the Heaviside limit of `softplus_m'`.
    Half,
}

/// Hidden-layer activation functions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Identity,
    Sigmoid,
    Tanh,
    Relu,
    /// Exact GELU, `z * Phi(z)`.
    Gelu,
    /// Sharpness-`m` softplus `(1/m) ln(1 + e^{m z})`; converges to ReLU as `m` grows.
    SoftplusM(f64),
}

#[inline]
pub(crate) fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / SQRT_2))
}

impl Activation {
    #[inline]
    pub fn eval(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Sigmoid => logistic(z),
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Gelu => z * std_normal_cdf(z),
            Activation::SoftplusM(m) => {
                let mz = m * z;
                if mz > 30.0 {
                    z + (-mz).exp().ln_1p() / m
                } else {
                    mz.exp().ln_1p() / m
                }
            }
        }
    }

    #[inline]
    pub fn derivative(self, z: f64, sel: GradSelection) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Sigmoid => {
                let s = logistic(z);
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else if z < 0.0 {
                    0.0
                } else {
                    match sel {
                        GradSelection::Zero => 0.0,
                        GradSelection::Half => 0.5,
                    }
                }
            }
            Activation::Gelu => std_normal_cdf(z) + z * INV_SQRT_2PI * (-0.5 * z * z).exp(),
            Activation::SoftplusM(m) => logistic(m * z),
        }
    }

    pub fn is_smooth(self) -> bool {
        !matches!(self, Activation::Relu)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Identity => f.write_str("identity"),
            Activation::Sigmoid => f.write_str("sigmoid"),
            Activation::Tanh => f.write_str("tanh"),
            Activation::Relu => f.write_str("relu"),
            Activation::Gelu => f.write_str("gelu"),
            Activation::SoftplusM(m) => write!(f, "softplus:{m:?}"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Ok(match s.as_str() {
            "identity" | "linear" => Activation::Identity,
            "sigmoid" => Activation::Sigmoid,
            "tanh" => Activation::Tanh,
            "relu" => Activation::Relu,
            "gelu" => Activation::Gelu,
            "softplus" => Activation::SoftplusM(1.0),
            other => match other.strip_prefix("softplus:") {
                Some(m) => {
                    let m: f64 = m
                        .parse()
                        .map_err(|_| Error::Config(format!("bad softplus sharpness `{m}`")))?;
                    if !(m > 0.0 && m.is_finite()) {
                        return Err(Error::Config(format!("softplus sharpness must be positive, got {m}")));
                    }
                    Activation::SoftplusM(m)
                }
                None => return Err(Error::Config(format!("unknown activation `{other}`"))),
            },
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HiddenLayer {
    pub width: usize,
    pub activation: Activation,
}

/// Architecture of an MLP with `input_dim` inputs, the given hidden layers
/// and a scalar linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    input_dim: usize,
    hidden: Vec<HiddenLayer>,
}

/// Flat network parameter vector in the layout described at module level.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    pub fn zeros(d: usize) -> Self {
        ParamVector(vec![0.0; d])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        ParamVector(v)
    }
}

impl NetworkSpec {
    pub fn new(input_dim: usize, hidden: Vec<HiddenLayer>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Config("input dimension must be positive".into()));
        }
        for (l, layer) in hidden.iter().enumerate() {
            if layer.width == 0 {
                return Err(Error::Config(format!("hidden layer {} has zero width", l + 1)));
            }
            if let Activation::SoftplusM(m) = layer.activation {
                if !(m > 0.0 && m.is_finite()) {
                    return Err(Error::Config(format!("softplus sharpness must be positive, got {m}")));
                }
            }
        }
        Ok(NetworkSpec { input_dim, hidden })
    }

    /// Every hidden layer shares `activation`.
    pub fn uniform(input_dim: usize, widths: &[usize], activation: Activation) -> Result<Self> {
        let hidden = widths
            .iter()
            .map(|&width| HiddenLayer { width, activation })
            .collect();
        Self::new(input_dim, hidden)
    }

    /// No hidden layers: `mu(x) = b + w^T x`.
    pub fn linear(input_dim: usize) -> Result<Self> {
        Self::new(input_dim, Vec::new())
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> &[HiddenLayer] {
        &self.hidden
    }

    pub fn depth(&self) -> usize {
        self.hidden.len()
    }

    /// Number of parameters `d`.
    pub fn param_dim(&self) -> usize {
        let mut d = 0;
        let mut fan_in = self.input_dim;
        for layer in &self.hidden {
            d += (fan_in + 1) * layer.width;
            fan_in = layer.width;
        }
        d + fan_in + 1
    }

    /// Offsets of `(W_l, b_l)` for each hidden layer and of the output block.
    fn layout(&self) -> (Vec<(usize, usize)>, usize) {
        let mut offsets = Vec::with_capacity(self.hidden.len());
        let mut at = 0;
        let mut fan_in = self.input_dim;
        for layer in &self.hidden {
            let w = at;
            let b = w + fan_in * layer.width;
            offsets.push((w, b));
            at = b + layer.width;
            fan_in = layer.width;
        }
        (offsets, at)
    }

    pub fn check_params(&self, theta: &ParamVector) -> Result<()> {
        let d = self.param_dim();
        if theta.len() != d {
            return Err(Error::Dimension {
                layer: "parameter vector".into(),
                expected: d,
                actual: theta.len(),
            });
        }
        if let Some(pos) = theta.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!("parameter {pos} is not finite")));
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::Dimension {
                layer: "input layer".into(),
                expected: self.input_dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Network output `mu(x, theta)`.
    pub fn forward(&self, theta: &ParamVector, x: &[f64]) -> Result<f64> {
        self.check_params(theta)?;
        self.check_input(x)?;
        let mut scratch = Scratch::new(self);
        Ok(self.forward_with(theta.as_slice(), x, &mut scratch))
    }

    /// `d mu / d theta` at `x`, computed by reverse-mode accumulation. At ReLU
    /// kinks the subgradient follows `sel`.
    pub fn grad_theta(&self, theta: &ParamVector, x: &[f64], sel: GradSelection) -> Result<Vec<f64>> {
        self.check_params(theta)?;
        self.check_input(x)?;
        let mut scratch = Scratch::new(self);
        let mut grad = vec![0.0; theta.len()];
        self.forward_with(theta.as_slice(), x, &mut scratch);
        self.accumulate_grad(theta.as_slice(), &mut scratch, 1.0, sel, &mut grad);
        Ok(grad)
    }

    /// Smallest `|z|` over all hidden pre-activations at `x`; zero means `x`
    /// sits on an activation kink for ReLU layers. Infinite when `L = 0`.
    pub fn min_abs_pre_activation(&self, theta: &ParamVector, x: &[f64]) -> Result<f64> {
        self.check_params(theta)?;
        self.check_input(x)?;
        let mut scratch = Scratch::new(self);
        self.forward_with(theta.as_slice(), x, &mut scratch);
        Ok(scratch.pre_activations().fold(f64::INFINITY, |m, z| m.min(z.abs())))
    }

    /// Unchecked forward pass that leaves every layer's pre-activations and
    /// activations in `scratch` for a following [`Self::accumulate_grad`].
    pub(crate) fn forward_with(&self, theta: &[f64], x: &[f64], scratch: &mut Scratch) -> f64 {
        let (offsets, out_at) = self.layout();
        scratch.acts[0].copy_from_slice(x);
        for (l, layer) in self.hidden.iter().enumerate() {
            let (w_at, b_at) = offsets[l];
            let width = layer.width;
            let (prev, rest) = scratch.acts.split_at_mut(l + 1);
            let input = &prev[l];
            let pre = &mut scratch.pre[l];
            pre.copy_from_slice(&theta[b_at..b_at + width]);
            for (j, &a) in input.iter().enumerate() {
                let col = &theta[w_at + j * width..w_at + (j + 1) * width];
                for (z, &w) in pre.iter_mut().zip(col) {
                    *z += w * a;
                }
            }
            for (out, &z) in rest[0].iter_mut().zip(pre.iter()) {
                *out = layer.activation.eval(z);
            }
        }
        let last = &scratch.acts[self.hidden.len()];
        let w_out = &theta[out_at..];
        w_out[0]
            + w_out[1..]
                .iter()
                .zip(last.iter())
                .map(|(w, a)| w * a)
                .sum::<f64>()
    }

    /// Adds `scale * d mu / d theta` into `grad`. Must follow `forward_with`
    /// on the same `theta` and `scratch`.
    pub(crate) fn accumulate_grad(
        &self,
        theta: &[f64],
        scratch: &mut Scratch,
        scale: f64,
        sel: GradSelection,
        grad: &mut [f64],
    ) {
        let (offsets, out_at) = self.layout();
        let depth = self.hidden.len();
        let last = &scratch.acts[depth];
        grad[out_at] += scale;
        for (g, a) in grad[out_at + 1..].iter_mut().zip(last) {
            *g += scale * a;
        }
        if depth == 0 {
            return;
        }
        // adjoint w.r.t. the activations of the current layer
        let upstream = &mut scratch.adj_a;
        upstream.clear();
        upstream.extend(theta[out_at + 1..].iter().map(|w| scale * w));
        for l in (0..depth).rev() {
            let layer = self.hidden[l];
            let width = layer.width;
            let (w_at, b_at) = offsets[l];
            let pre = &scratch.pre[l];
            let adj_z = &mut scratch.adj_z;
            adj_z.clear();
            adj_z.extend(
                upstream
                    .iter()
                    .zip(pre)
                    .map(|(da, &z)| da * layer.activation.derivative(z, sel)),
            );
            for (g, dz) in grad[b_at..b_at + width].iter_mut().zip(adj_z.iter()) {
                *g += dz;
            }
            let input = &scratch.acts[l];
            for (j, &a) in input.iter().enumerate() {
                let gcol = &mut grad[w_at + j * width..w_at + (j + 1) * width];
                for (g, dz) in gcol.iter_mut().zip(adj_z.iter()) {
                    *g += dz * a;
                }
            }
            if l > 0 {
                upstream.clear();
                for j in 0..input.len() {
                    let col = &theta[w_at + j * width..w_at + (j + 1) * width];
                    upstream.push(col.iter().zip(adj_z.iter()).map(|(w, dz)| w * dz).sum());
                }
            }
        }
    }

    /// Replaces every ReLU by the sharpness-`m` softplus.
    pub fn smooth_network(&self, m: f64) -> Result<NetworkSpec> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::Config(format!("smoothing sharpness must be positive, got {m}")));
        }
        let hidden = self
            .hidden
            .iter()
            .map(|layer| HiddenLayer {
                width: layer.width,
                activation: match layer.activation {
                    Activation::Relu => Activation::SoftplusM(m),
                    other => other,
                },
            })
            .collect();
        Ok(NetworkSpec {
            input_dim: self.input_dim,
            hidden,
        })
    }

    pub fn has_relu(&self) -> bool {
        self.hidden.iter().any(|l| l.activation == Activation::Relu)
    }

    /// Glorot-uniform weights on `[-sqrt(6/(fan_in+fan_out)), +...]`, zero biases.
    pub fn glorot_init(&self, seed: u64) -> ParamVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = vec![0.0; self.param_dim()];
        let (offsets, out_at) = self.layout();
        let mut fan_in = self.input_dim;
        for (layer, &(w_at, _)) in self.hidden.iter().zip(&offsets) {
            let limit = (6.0 / (fan_in + layer.width) as f64).sqrt();
            for w in &mut theta[w_at..w_at + fan_in * layer.width] {
                *w = rng.random_range(-limit..=limit);
            }
            fan_in = layer.width;
        }
        let limit = (6.0 / (fan_in + 1) as f64).sqrt();
        for w in &mut theta[out_at + 1..] {
            *w = rng.random_range(-limit..=limit);
        }
        ParamVector(theta)
    }

    pub fn write_checkpoint(&self, theta: &ParamVector, path: &Path) -> Result<()> {
        self.check_params(theta)?;
        let mut out = String::new();
        out.push_str(&self.to_string());
        out.push('\n');
        out.push_str(&format!("{}\n", theta.len()));
        for v in theta.as_slice() {
            out.push_str(&format!("{v:.16e}\n"));
        }
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_checkpoint(path: &Path) -> Result<(NetworkSpec, ParamVector)> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let spec: NetworkSpec = lines
            .next()
            .ok_or_else(|| Error::Checkpoint("missing descriptor line".into()))?
            .parse()?;
        let d: usize = lines
            .next()
            .ok_or_else(|| Error::Checkpoint("missing parameter count".into()))?
            .trim()
            .parse()
            .map_err(|_| Error::Checkpoint("parameter count is not an integer".into()))?;
        if d != spec.param_dim() {
            return Err(Error::Checkpoint(format!(
                "descriptor implies {} parameters but header says {d}",
                spec.param_dim()
            )));
        }
        let values = lines
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(k, l)| {
                l.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Checkpoint(format!("parameter {k} is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != d {
            return Err(Error::Checkpoint(format!("expected {d} parameters, found {}", values.len())));
        }
        Ok((spec, ParamVector(values)))
    }
}

/// Descriptor `p;K_1,...,K_L;activation`. Mixed activations are written as a
/// comma list with one entry per hidden layer.
impl fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let widths: Vec<String> = self.hidden.iter().map(|l| l.width.to_string()).collect();
        let acts: Vec<String> = self.hidden.iter().map(|l| l.activation.to_string()).collect();
        let act = match acts.first() {
            None => "identity".to_string(),
            Some(first) if acts.iter().all(|a| a == first) => first.clone(),
            Some(_) => acts.join(","),
        };
        write!(f, "{};{};{}", self.input_dim, widths.join(","), act)
    }
}

impl FromStr for NetworkSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(';').collect();
        if parts.len() != 3 {
            return Err(Error::Checkpoint(format!("descriptor `{s}` must have three `;`-separated fields")));
        }
        let p: usize = parts[0]
            .trim()
            .parse()
            .map_err(|_| Error::Checkpoint(format!("bad input dimension `{}`", parts[0])))?;
        let widths = parts[1]
            .split(',')
            .map(str::trim)
            .filter(|w| !w.is_empty())
            .map(|w| {
                w.parse::<usize>()
                    .map_err(|_| Error::Checkpoint(format!("bad layer width `{w}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let acts = parts[2]
            .split(',')
            .map(|a| a.parse::<Activation>())
            .collect::<Result<Vec<_>>>()?;
        let hidden = match acts.len() {
            1 => widths
                .iter()
                .map(|&width| HiddenLayer {
                    width,
                    activation: acts[0],
                })
                .collect(),
            n if n == widths.len() => widths
                .iter()
                .zip(&acts)
                .map(|(&width, &activation)| HiddenLayer { width, activation })
                .collect(),
            _ => {
                return Err(Error::Checkpoint(
                    "activation list length does not match the number of hidden layers".into(),
                ))
            }
        };
        NetworkSpec::new(p, hidden)
    }
}

/// Reusable per-layer buffers for forward and reverse passes.
#[derive(Clone, Debug)]
pub(crate) struct Scratch {
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    adj_a: Vec<f64>,
    adj_z: Vec<f64>,
}

impl Scratch {
    pub(crate) fn new(spec: &NetworkSpec) -> Self {
        let mut acts = vec![vec![0.0; spec.input_dim]];
        acts.extend(spec.hidden.iter().map(|l| vec![0.0; l.width]));
        let pre = spec.hidden.iter().map(|l| vec![0.0; l.width]).collect();
        let widest = spec
            .hidden
            .iter()
            .map(|l| l.width)
            .chain(std::iter::once(spec.input_dim))
            .max()
            .unwrap_or(0);
        Scratch {
            acts,
            pre,
            adj_a: Vec::with_capacity(widest),
            adj_z: Vec::with_capacity(widest),
        }
    }

    /// Pre-activations of every hidden layer from the last forward pass.
    pub(crate) fn pre_activations(&self) -> impl Iterator<Item = f64> + '_ {
        self.pre.iter().flatten().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_net(act: Activation) -> (NetworkSpec, ParamVector) {
        // mu(x) = w0_out + w1_out * phi(w0 + w1 x) with (w0, w1, w0_out, w1_out) = (1, 1, 2, 1.5);
        // layout order is (W_1 = w1, b_1 = w0, w0_out, w1_out).
        let spec = NetworkSpec::uniform(1, &[1], act).unwrap();
        (spec, ParamVector::new(vec![1.0, 1.0, 2.0, 1.5]))
    }

    fn central_diff(spec: &NetworkSpec, theta: &ParamVector, x: &[f64], h: f64) -> Vec<f64> {
        (0..theta.len())
            .map(|k| {
                let mut plus = theta.clone();
                let mut minus = theta.clone();
                plus.as_mut_slice()[k] += h;
                minus.as_mut_slice()[k] -= h;
                (spec.forward(&plus, x).unwrap() - spec.forward(&minus, x).unwrap()) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-8);
        diff / scale
    }

    #[test]
    fn identity_network() {
        let spec = NetworkSpec::linear(1).unwrap();
        let theta = ParamVector::new(vec![1.0, 0.0]);
        // layout for L = 0 is just (w_0^out, w_1^out) = (b, w)
        let theta_bw = ParamVector::new(vec![0.0, 1.0]);
        assert_eq!(spec.forward(&theta_bw, &[2.0]).unwrap(), 2.0);
        assert_eq!(spec.forward(&theta, &[2.0]).unwrap(), 1.0);
    }

    #[test]
    fn shallow_sigmoid_value() {
        let (spec, theta) = example_net(Activation::Sigmoid);
        let expected = 2.0 + 1.5 / (1.0 + (-1.0f64).exp());
        assert!((spec.forward(&theta, &[0.0]).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn relu_dead_region() {
        let (spec, theta) = example_net(Activation::Relu);
        assert_eq!(spec.forward(&theta, &[-5.0]).unwrap(), 2.0);
    }

    #[test]
    fn shallow_sigmoid_gradient_closed_form() {
        let (spec, theta) = example_net(Activation::Sigmoid);
        for &x in &[-3.0, 0.0, 0.7, 4.0] {
            let a: f64 = 1.0 + x;
            let s = logistic(a);
            let dphi = s * (1.0 - s);
            let g = spec.grad_theta(&theta, &[x], GradSelection::Zero).unwrap();
            // layout (w1, w0, w0_out, w1_out)
            let expected = [1.5 * dphi * x, 1.5 * dphi, 1.0, s];
            for (got, want) in g.iter().zip(expected) {
                assert!((got - want).abs() < 1e-14, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn relu_kink_uses_half() {
        let (spec, theta) = example_net(Activation::Relu);
        // pre-activation 1 + x = 0 at x = -1
        let half = spec.grad_theta(&theta, &[-1.0], GradSelection::Half).unwrap();
        assert_eq!(half, vec![1.5 * 0.5 * -1.0, 1.5 * 0.5, 1.0, 0.0]);
        let zero = spec.grad_theta(&theta, &[-1.0], GradSelection::Zero).unwrap();
        assert_eq!(zero, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let acts = [
            Activation::Sigmoid,
            Activation::Tanh,
            Activation::Gelu,
            Activation::SoftplusM(3.0),
            Activation::Identity,
        ];
        for trial in 0..20 {
            let act = acts[trial % acts.len()];
            let spec = NetworkSpec::uniform(3, &[4, 3], act).unwrap();
            let theta = ParamVector::new(
                (0..spec.param_dim())
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect(),
            );
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let g = spec.grad_theta(&theta, &x, GradSelection::Zero).unwrap();
            let fd = central_diff(&spec, &theta, &x, 1e-6);
            assert!(rel_err(&g, &fd) < 1e-5, "trial {trial} ({act}): {}", rel_err(&g, &fd));
        }
    }

    #[test]
    fn param_dim_matches_formula_and_consumption() {
        let spec = NetworkSpec::uniform(1, &[50, 50, 50, 50, 50], Activation::Relu).unwrap();
        assert_eq!(spec.param_dim(), 10351);
        let spec = NetworkSpec::uniform(2, &[10], Activation::Relu).unwrap();
        assert_eq!(spec.param_dim(), 41);
        assert_eq!(NetworkSpec::linear(3).unwrap().param_dim(), 4);
        // the last output weight is used: perturbing it changes the output
        let spec = NetworkSpec::uniform(2, &[3, 2], Activation::Sigmoid).unwrap();
        let theta = spec.glorot_init(1);
        let mut bumped = theta.clone();
        let d = bumped.len();
        bumped.as_mut_slice()[d - 1] += 1.0;
        assert_ne!(
            spec.forward(&theta, &[0.3, 0.1]).unwrap(),
            spec.forward(&bumped, &[0.3, 0.1]).unwrap()
        );
        let short = ParamVector::zeros(d - 1);
        assert!(matches!(spec.forward(&short, &[0.3, 0.1]), Err(Error::Dimension { .. })));
        assert!(matches!(spec.forward(&theta, &[0.3]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn glorot_bounds_and_determinism() {
        let spec = NetworkSpec::uniform(4, &[4], Activation::Tanh).unwrap();
        let a = spec.glorot_init(11);
        let b = spec.glorot_init(11);
        assert_eq!(a, b);
        let limit = (6.0f64 / 8.0).sqrt();
        assert!((limit - 0.866).abs() < 1e-3);
        let (offsets, out_at) = spec.layout();
        let (w_at, b_at) = offsets[0];
        assert!(a.as_slice()[w_at..b_at].iter().all(|w| w.abs() <= limit));
        assert!(a.as_slice()[b_at..b_at + 4].iter().all(|&b| b == 0.0));
        assert_eq!(a.as_slice()[out_at], 0.0);
        assert_ne!(a, spec.glorot_init(12));
    }

    #[test]
    fn softplus_within_log2_over_m_of_relu() {
        for &m in &[1.0, 10.0, 100.0, 1000.0] {
            let sp = Activation::SoftplusM(m);
            let gap = (0..=2000)
                .map(|k| -10.0 + 0.01 * k as f64)
                .map(|z| (sp.eval(z) - z.max(0.0)).abs())
                .fold(0.0, f64::max);
            assert!(gap <= std::f64::consts::LN_2 / m + 1e-15, "m = {m}: {gap}");
        }
        assert!((Activation::SoftplusM(1.0).eval(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(Activation::SoftplusM(1.0).eval(1000.0).is_finite());
    }

    #[test]
    fn smoothing_replaces_only_relu() {
        let spec = NetworkSpec::uniform(2, &[3], Activation::Sigmoid).unwrap();
        assert_eq!(spec.smooth_network(10.0).unwrap(), spec);
        let relu = NetworkSpec::new(
            2,
            vec![
                HiddenLayer { width: 3, activation: Activation::Relu },
                HiddenLayer { width: 2, activation: Activation::Tanh },
            ],
        )
        .unwrap();
        let smooth = relu.smooth_network(1.0).unwrap();
        assert_eq!(smooth.hidden()[0].activation, Activation::SoftplusM(1.0));
        assert_eq!(smooth.hidden()[1].activation, Activation::Tanh);
    }

    #[test]
    fn smooth_forward_converges_to_relu() {
        let spec = NetworkSpec::uniform(1, &[4, 3], Activation::Relu).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let thetas: Vec<ParamVector> = (0..5)
            .map(|_| ParamVector::new((0..spec.param_dim()).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect();
        let mut last_gap = f64::INFINITY;
        for &m in &[1.0, 10.0, 100.0, 1000.0] {
            let smooth = spec.smooth_network(m).unwrap();
            let mut gap: f64 = 0.0;
            for theta in &thetas {
                for k in 0..=40 {
                    let x = [-2.0 + 0.1 * k as f64];
                    gap = gap.max((smooth.forward(theta, &x).unwrap() - spec.forward(theta, &x).unwrap()).abs());
                }
            }
            assert!(gap < last_gap, "gap did not shrink at m = {m}");
            last_gap = gap;
        }
    }

    #[test]
    fn hidden_unit_permutation_invariance() {
        let spec = NetworkSpec::uniform(2, &[3, 2], Activation::Tanh).unwrap();
        let theta = spec.glorot_init(5);
        let mut theta: Vec<f64> = theta.into_inner();
        // nonzero biases so they participate in the check
        let (offsets, out_at) = spec.layout();
        for (k, b) in theta[offsets[0].1..offsets[0].1 + 3].iter_mut().enumerate() {
            *b = 0.1 * (k as f64 + 1.0);
        }
        let perm = [2usize, 0, 1];
        let mut permuted = theta.clone();
        // rows of W_1 and entries of b_1
        for j in 0..2 {
            for k in 0..3 {
                permuted[offsets[0].0 + j * 3 + k] = theta[offsets[0].0 + j * 3 + perm[k]];
            }
        }
        for k in 0..3 {
            permuted[offsets[0].1 + k] = theta[offsets[0].1 + perm[k]];
        }
        // matching columns of W_2
        for k in 0..3 {
            for r in 0..2 {
                permuted[offsets[1].0 + k * 2 + r] = theta[offsets[1].0 + perm[k] * 2 + r];
            }
        }
        let _ = out_at;
        let a = ParamVector::new(theta);
        let b = ParamVector::new(permuted);
        for x in [[0.3, -0.2], [1.5, 2.0], [-1.0, 0.0]] {
            let (fa, fb) = (spec.forward(&a, &x).unwrap(), spec.forward(&b, &x).unwrap());
            assert!((fa - fb).abs() < 1e-14);
        }
    }

    #[test]
    fn descriptor_round_trip() {
        let spec = NetworkSpec::uniform(7, &[30, 30, 30], Activation::Relu).unwrap();
        assert_eq!(spec.to_string(), "7;30,30,30;relu");
        assert_eq!(spec.to_string().parse::<NetworkSpec>().unwrap(), spec);
        let lin = NetworkSpec::linear(2).unwrap();
        assert_eq!(lin.to_string().parse::<NetworkSpec>().unwrap(), lin);
        let sp: NetworkSpec = "1;5;softplus:10.0".parse().unwrap();
        assert_eq!(sp.hidden()[0].activation, Activation::SoftplusM(10.0));
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let spec = NetworkSpec::uniform(2, &[5], Activation::Gelu).unwrap();
        let theta = spec.glorot_init(99);
        spec.write_checkpoint(&theta, &path).unwrap();
        let (spec2, theta2) = NetworkSpec::read_checkpoint(&path).unwrap();
        assert_eq!(spec, spec2);
        assert_eq!(theta, theta2);
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("2;5;gelu"));
        assert_eq!(lines.next(), Some("21"));
    }
}
