use crate::error::{Error, Result};

/// Regression sample: `n` covariate rows of width `p`, responses, and a flag
/// per row recording whether the contamination pass touched it.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    p: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
    contaminated: Vec<bool>,
}

impl Dataset {
    /// `xs` is row-major with `ys.len()` rows of width `p`.
    pub fn new(p: usize, xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if p == 0 {
            return Err(Error::Config("covariate dimension must be positive".into()));
        }
        if xs.len() != p * ys.len() {
            return Err(Error::Dimension {
                layer: "dataset covariates".into(),
                expected: p * ys.len(),
                actual: xs.len(),
            });
        }
        let n = ys.len();
        Ok(Dataset {
            p,
            xs,
            ys,
            contaminated: vec![false; n],
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], ys: Vec<f64>) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != p) {
            return Err(Error::Dimension {
                layer: format!("dataset row {bad}"),
                expected: p,
                actual: rows[bad].len(),
            });
        }
        Self::new(p, rows.concat(), ys)
    }

    pub fn with_mask(mut self, contaminated: Vec<bool>) -> Result<Self> {
        if contaminated.len() != self.ys.len() {
            return Err(Error::Dimension {
                layer: "contamination mask".into(),
                expected: self.ys.len(),
                actual: contaminated.len(),
            });
        }
        self.contaminated = contaminated;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.p..(i + 1) * self.p]
    }

    pub fn y(&self, i: usize) -> f64 {
        self.ys[i]
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn ys_mut(&mut self) -> &mut [f64] {
        &mut self.ys
    }

    pub fn x_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.xs[i * self.p..(i + 1) * self.p]
    }

    pub fn contaminated(&self) -> &[bool] {
        &self.contaminated
    }

    pub fn contaminated_mut(&mut self) -> &mut [bool] {
        &mut self.contaminated
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.xs.chunks_exact(self.p).zip(self.ys.iter().copied())
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut xs = Vec::with_capacity(indices.len() * self.p);
        let mut ys = Vec::with_capacity(indices.len());
        let mut contaminated = Vec::with_capacity(indices.len());
        for &i in indices {
            xs.extend_from_slice(self.x(i));
            ys.push(self.ys[i]);
            contaminated.push(self.contaminated[i]);
        }
        Dataset {
            p: self.p,
            xs,
            ys,
            contaminated,
        }
    }

    pub(crate) fn require_non_empty(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::EmptyDataset)
        } else {
            Ok(())
        }
    }
}
