use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::dgp::stream_rng;
use super::replications::tmse;
use super::{beta_cell, Method};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nn::NetworkSpec;
use crate::trainer::{predict, TrainConfig};

const FOLD_STREAM: u64 = 4;

/// Fold of every row: a seeded shuffle dealt round-robin into `k` folds,
/// so fold sizes differ by at most one.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || k > n {
        return Err(Error::Config(format!("fold count must lie in 2..={n}, got {k}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, FOLD_STREAM));
    let mut fold = vec![0; n];
    for (j, &i) in order.iter().enumerate() {
        fold[i] = j % k;
    }
    Ok(fold)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvReport {
    pub k: usize,
    pub trim: f64,
    pub methods: Vec<Method>,
    /// `fold_tmse[m][f]`: held-out TMSE of method `m` on fold `f`.
    pub fold_tmse: Vec<Vec<f64>>,
}

impl CvReport {
    /// Average held-out TMSE per method.
    pub fn means(&self) -> Vec<f64> {
        self.fold_tmse
            .iter()
            .map(|f| f.iter().sum::<f64>() / f.len() as f64)
            .collect()
    }

    pub fn mean_of(&self, method: &Method) -> Option<f64> {
        let m = self.methods.iter().position(|x| x == method)?;
        Some(self.means()[m])
    }

    /// `method,beta,k,trim,cv_tmse`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,beta,k,trim,cv_tmse\n");
        for (method, mean) in self.methods.iter().zip(self.means()) {
            let _ = writeln!(
                out,
                "{},{},{},{},{mean:e}",
                method.label(),
                beta_cell(method.beta()),
                self.k,
                self.trim
            );
        }
        out
    }
}

/// `k`-fold cross-validated TMSE: every method is fit on `k - 1` folds and
/// scored on the held-out fold with trimming fraction `trim`. Folds are
/// drawn from `train_cfg.seed`, which also seeds every fit.
pub fn kfold_cv(
    data: &Dataset,
    k: usize,
    methods: &[Method],
    trim: f64,
    spec: &NetworkSpec,
    train_cfg: &TrainConfig,
) -> Result<CvReport> {
    data.require_non_empty()?;
    if methods.is_empty() {
        return Err(Error::Config("no methods given".into()));
    }
    if !(0.0..1.0).contains(&trim) {
        return Err(Error::Config(format!("trimming fraction must lie in [0, 1), got {trim}")));
    }
    for m in methods {
        m.validate()?;
    }
    let fold = fold_assignment(data.len(), k, train_cfg.seed)?;
    let cells: Vec<(usize, usize)> = (0..methods.len()).flat_map(|m| (0..k).map(move |f| (m, f))).collect();
    let scores: Vec<f64> = cells
        .par_iter()
        .map(|&(m, f)| {
            let (train_rows, test_rows): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| fold[i] != f);
            let train = data.subset(&train_rows);
            let test = data.subset(&test_rows);
            let fit = methods[m].fit(spec, &train, train_cfg)?;
            let fitted = predict(spec, &fit.theta, test.xs())?;
            tmse(test.ys(), &fitted, trim)
        })
        .collect::<Result<_>>()?;
    Ok(CvReport {
        k,
        trim,
        methods: methods.to_vec(),
        fold_tmse: scores.chunks(k).map(<[f64]>::to_vec).collect(),
    })
}
