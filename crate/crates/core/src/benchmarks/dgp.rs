//! Target functions and the simulated data of the function-approximation
//! study.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::influence::linspace;
use crate::nn::{Activation, NetworkSpec};

/// Generator stream for the training sample; the network initialization
/// and batch shuffling use other streams of the same seed.
pub const TRAIN_STREAM: u64 = 1;
pub const TEST_STREAM: u64 = 2;
/// Generator used throughout, recorded in output metadata.
pub const GENERATOR_NAME: &str = "ChaCha8Rng (rand_chacha 0.9), normals via rand_distr::Normal (ziggurat)";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PhiId {
    Phi1,
    Phi2,
    Phi3,
    Phi4,
    Phi5,
    Phi6,
    Phi7,
}

/// How a contaminated row is rebuilt.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Contamination {
    /// Redraw the error from `N(mean, variance)`.
    Error { mean: f64, variance: f64 },
    /// Replace the covariates by `U[-half_width, half_width]^p` draws and the
    /// response by an `N(mean, variance)` draw.
    Replace { half_width: f64, mean: f64, variance: f64 },
}

impl PhiId {
    pub const ALL: [PhiId; 7] = [
        PhiId::Phi1,
        PhiId::Phi2,
        PhiId::Phi3,
        PhiId::Phi4,
        PhiId::Phi5,
        PhiId::Phi6,
        PhiId::Phi7,
    ];

    pub fn input_dim(self) -> usize {
        match self {
            PhiId::Phi1 | PhiId::Phi2 | PhiId::Phi3 => 1,
            PhiId::Phi4 | PhiId::Phi5 | PhiId::Phi6 => 2,
            PhiId::Phi7 => 7,
        }
    }

    pub fn default_n(self) -> usize {
        match self {
            PhiId::Phi1 => 401,
            PhiId::Phi2 => 151,
            PhiId::Phi3 => 800,
            PhiId::Phi4 => 256,
            PhiId::Phi5 => 100,
            PhiId::Phi6 | PhiId::Phi7 => 200,
        }
    }

    /// Clean error standard deviation. For φ5 this corresponds to an error
    /// variance of 0.01.
    pub fn default_sigma(self) -> f64 {
        match self {
            PhiId::Phi6 => 0.05,
            PhiId::Phi7 => 1.0,
            _ => 0.1,
        }
    }

    pub fn contamination(self) -> Contamination {
        let error = |mean, variance| Contamination::Error { mean, variance };
        match self {
            PhiId::Phi1 | PhiId::Phi3 => error(2.0, 1.0),
            PhiId::Phi2 | PhiId::Phi4 => error(2.0, 4.0),
            PhiId::Phi5 => error(0.0, 4.0),
            PhiId::Phi6 => Contamination::Replace {
                half_width: 10.0,
                mean: 10.0,
                variance: 10.0,
            },
            PhiId::Phi7 => error(5.0, 25.0),
        }
    }

    /// Default network for the function.
    pub fn architecture(self) -> NetworkSpec {
        let (act, widths): (Activation, &[usize]) = match self {
            PhiId::Phi1 => (Activation::Relu, &[5]),
            PhiId::Phi2 => (Activation::Sigmoid, &[10]),
            PhiId::Phi3 => (Activation::Relu, &[50; 5]),
            PhiId::Phi4 => (Activation::Sigmoid, &[15]),
            PhiId::Phi5 => (Activation::Relu, &[10]),
            PhiId::Phi6 => (Activation::Gelu, &[30]),
            PhiId::Phi7 => (Activation::Relu, &[30; 3]),
        };
        NetworkSpec::uniform(self.input_dim(), widths, act).expect("static architecture")
    }

    /// Whether the covariates are a fixed grid rather than random draws.
    pub fn is_fixed_design(self) -> bool {
        matches!(self, PhiId::Phi1 | PhiId::Phi2 | PhiId::Phi4 | PhiId::Phi5)
    }
}

impl fmt::Display for PhiId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = PhiId::ALL.iter().position(|p| p == self).unwrap() + 1;
        write!(f, "phi{k}")
    }
}

impl FromStr for PhiId {
    type Err = Error;

    /// `phi3`, `3`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let digits = t.strip_prefix("phi").unwrap_or(&t);
        match digits.parse::<usize>() {
            Ok(k @ 1..=7) => Ok(PhiId::ALL[k - 1]),
            _ => Err(Error::Config(format!("unknown target function `{s}` (expected phi1..phi7)"))),
        }
    }
}

fn in_unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

/// Evaluates the target function. For `phi5` this is the angle `z` with
/// `(x1, x2) = (sin z, cos z)`.
pub fn eval_phi(id: PhiId, x: &[f64]) -> Result<f64> {
    if x.len() != id.input_dim() {
        return Err(Error::Dimension {
            layer: format!("{id} input"),
            expected: id.input_dim(),
            actual: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::OutOfDomain(format!("{x:?} for {id}")));
    }
    let v = match id {
        PhiId::Phi1 => x[0].abs().powf(2.0 / 3.0),
        PhiId::Phi2 => {
            if x[0] == 0.0 {
                1.0
            } else {
                x[0].sin() / x[0]
            }
        }
        PhiId::Phi3 => {
            let t = x[0];
            if !in_unit(t) {
                return Err(Error::OutOfDomain(format!("x = {t} for {id} (domain [0, 1])")));
            }
            (t * (1.0 - t)).sqrt() * (2.2 * PI / (t + 0.15)).sin()
        }
        PhiId::Phi4 => x[0] * (-(x[0] * x[0] + x[1] * x[1])).exp(),
        PhiId::Phi5 => {
            if x[0] == 0.0 && x[1] == 0.0 {
                return Err(Error::OutOfDomain(format!("{x:?} for {id} (angle undefined at the origin)")));
            }
            x[0].atan2(x[1])
        }
        PhiId::Phi6 => {
            const KERNELS: [(f64, [f64; 2]); 3] = [(1.0, [0.0, 0.75]), (2.0, [0.5, -0.5]), (2.0, [-0.75, 0.0])];
            KERNELS
                .iter()
                .map(|(a, m)| (-a * ((x[0] - m[0]).powi(2) + (x[1] - m[1]).powi(2))).exp())
                .sum()
        }
        PhiId::Phi7 => {
            if !x.iter().all(|&v| in_unit(v)) {
                return Err(Error::OutOfDomain(format!("{x:?} for {id} (domain [0, 1]^7)")));
            }
            x[0] + x[1].tan() + x[2].powi(3) + (x[3] + 0.1).ln() + 3.0 * x[4] + x[5] + (x[6] + 0.1).sqrt()
        }
    };
    Ok(v)
}

/// One simulated scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct DgpSpec {
    pub id: PhiId,
    pub n: usize,
    pub sigma: f64,
    /// Fraction of contaminated training rows.
    pub delta: f64,
    pub seed: u64,
}

impl DgpSpec {
    /// Table defaults for `n` and `sigma`.
    pub fn new(id: PhiId, delta: f64, seed: u64) -> Self {
        DgpSpec {
            id,
            n: id.default_n(),
            sigma: id.default_sigma(),
            delta,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.delta) {
            return Err(Error::Config(format!("contamination fraction must lie in [0, 0.5), got {}", self.delta)));
        }
        if self.n == 0 {
            return Err(Error::EmptyDataset);
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("error sd must be positive, got {}", self.sigma)));
        }
        Ok(())
    }

    /// `floor(delta n)`.
    pub fn contaminated_count(&self) -> usize {
        (self.delta * self.n as f64).floor() as usize
    }
}

fn covariates(id: PhiId, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let unit = Uniform::new_inclusive(0.0, 1.0).expect("valid range");
    match id {
        PhiId::Phi1 => linspace(-2.0, 2.0, n),
        PhiId::Phi2 => linspace(-7.5, 7.5, n),
        PhiId::Phi3 => (0..n).map(|_| unit.sample(rng)).collect(),
        PhiId::Phi4 => {
            let side = (n as f64).sqrt().round() as usize;
            let axis = linspace(-2.0, 2.0, side);
            let mut xs = Vec::with_capacity(2 * side * side);
            for &a in &axis {
                for &b in &axis {
                    xs.extend_from_slice(&[a, b]);
                }
            }
            xs
        }
        PhiId::Phi5 => linspace(0.0, PI, n).into_iter().flat_map(|z| [z.sin(), z.cos()]).collect(),
        PhiId::Phi6 => {
            let u = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
            (0..2 * n).map(|_| u.sample(rng)).collect()
        }
        PhiId::Phi7 => (0..7 * n).map(|_| unit.sample(rng)).collect(),
    }
}

fn clean_sample(dgp: &DgpSpec, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let id = dgp.id;
    let xs = covariates(id, dgp.n, rng);
    let p = id.input_dim();
    let n = xs.len() / p;
    let noise = Normal::new(0.0, dgp.sigma).map_err(|e| Error::Config(e.to_string()))?;
    let signal = if id == PhiId::Phi5 {
        // the angles come first; the covariates are derived from them
        linspace(0.0, PI, n)
    } else {
        xs.chunks_exact(p).map(|x| eval_phi(id, x)).collect::<Result<_>>()?
    };
    let ys = signal.iter().map(|f| f + noise.sample(rng)).collect();
    Ok((xs, signal, ys))
}

fn normal(mean: f64, variance: f64) -> Result<Normal<f64>> {
    Normal::new(mean, variance.sqrt()).map_err(|e| Error::Config(e.to_string()))
}

/// Seeded training and clean test samples. The training sample has exactly
/// `floor(delta n)` rows, chosen without replacement, rebuilt from the
/// function's contaminating law.
pub fn gen_dataset(dgp: &DgpSpec) -> Result<(Dataset, Dataset)> {
    dgp.validate()?;
    let id = dgp.id;
    let p = id.input_dim();
    if id == PhiId::Phi4 {
        let side = (dgp.n as f64).sqrt().round() as usize;
        if side * side != dgp.n {
            return Err(Error::Config(format!("{id} uses a square grid; n = {} is not a square", dgp.n)));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(dgp.seed);
    rng.set_stream(TRAIN_STREAM);
    let (mut xs, signal, mut ys) = clean_sample(dgp, &mut rng)?;
    let n = ys.len();
    let k = dgp.contaminated_count();
    let mut mask = vec![false; n];
    let mut chosen = index::sample(&mut rng, n, k).into_vec();
    chosen.sort_unstable();
    match id.contamination() {
        Contamination::Error { mean, variance } => {
            let law = normal(mean, variance)?;
            for &i in &chosen {
                ys[i] = signal[i] + law.sample(&mut rng);
                mask[i] = true;
            }
        }
        Contamination::Replace {
            half_width,
            mean,
            variance,
        } => {
            let box_law = Uniform::new_inclusive(-half_width, half_width).expect("valid range");
            let law = normal(mean, variance)?;
            for &i in &chosen {
                for v in &mut xs[i * p..(i + 1) * p] {
                    *v = box_law.sample(&mut rng);
                }
                ys[i] = law.sample(&mut rng);
                mask[i] = true;
            }
        }
    }
    let train = Dataset::new(p, xs, ys)?.with_mask(mask)?;

    let mut rng = ChaCha8Rng::seed_from_u64(dgp.seed);
    rng.set_stream(TEST_STREAM);
    let (xs, _, ys) = clean_sample(dgp, &mut rng)?;
    let test = Dataset::new(p, xs, ys)?;
    Ok((train, test))
}

/// Uniform draw helper for tests and examples that need one extra stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

