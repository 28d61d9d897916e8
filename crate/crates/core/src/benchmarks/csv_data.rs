use std::path::Path;

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Which column holds the response.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ResponseColumn {
    Name(String),
    /// 0-based column index.
    Index(usize),
    Last,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ScalePolicy {
    /// Also min-max scale the response.
    pub scale_response: bool,
}

/// Min-max map of one column; a constant column maps to 0.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnScale {
    pub name: String,
    pub min: f64,
    pub range: f64,
}

impl ColumnScale {
    fn fit(name: &str, values: impl Iterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let range = hi - lo;
        if range == 0.0 {
            log::warn!("column `{name}` is constant; it is scaled to 0");
        }
        ColumnScale {
            name: name.to_string(),
            min: lo,
            range,
        }
    }

    pub fn apply(&self, v: f64) -> f64 {
        if self.range > 0.0 {
            (v - self.min) / self.range
        } else {
            0.0
        }
    }

    pub fn invert(&self, u: f64) -> f64 {
        self.min + u * self.range
    }
}

/// Scaling applied by [`load_csv`], kept for mapping back to original units.
#[derive(Clone, Debug, PartialEq)]
pub struct Scaling {
    pub covariates: Vec<ColumnScale>,
    pub response: Option<ColumnScale>,
    pub response_name: String,
}

impl Scaling {
    /// Original-unit covariates of a scaled row.
    pub fn unscale_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.covariates).map(|(u, c)| c.invert(*u)).collect()
    }

    pub fn scale_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.covariates).map(|(v, c)| c.apply(*v)).collect()
    }

    /// Original-unit response; the identity if the response was not scaled.
    pub fn unscale_y(&self, y: f64) -> f64 {
        self.response.as_ref().map_or(y, |c| c.invert(y))
    }
}

/// Reads a numeric CSV with a header row, min-max scales every covariate to
/// `[0, 1]` (and the response if asked) and returns the scaling.
pub fn load_csv(path: &Path, response: &ResponseColumn, policy: ScalePolicy) -> Result<(Dataset, Scaling)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Parse {
                path: path.to_path_buf(),
                row: 1,
                column: String::new(),
                message: format!("{other:?}"),
            },
        })?;
    let parse_err = |row: usize, column: &str, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        message,
    };
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(1, "", e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.len() < 2 {
        return Err(parse_err(1, "", "need a response and at least one covariate column".into()));
    }
    let target = match response {
        ResponseColumn::Name(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(1, name, "response column not found in the header".into()))?,
        ResponseColumn::Index(k) if *k < headers.len() => *k,
        ResponseColumn::Index(k) => return Err(parse_err(1, &k.to_string(), format!("only {} columns", headers.len()))),
        ResponseColumn::Last => headers.len() - 1,
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, record) in reader.records().enumerate() {
        // header is line 1
        let line = k + 2;
        let record = record.map_err(|e| parse_err(line, "", e.to_string()))?;
        if record.len() != headers.len() {
            return Err(parse_err(
                line,
                "",
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        let row = record
            .iter()
            .zip(&headers)
            .map(|(cell, name)| match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_err(line, name, format!("`{cell}` is not a finite number"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let cov_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != target).collect();
    let covariates: Vec<ColumnScale> = cov_cols
        .iter()
        .map(|&c| ColumnScale::fit(&headers[c], rows.iter().map(|r| r[c])))
        .collect();
    let response_scale = policy
        .scale_response
        .then(|| ColumnScale::fit(&headers[target], rows.iter().map(|r| r[target])));
    let mut xs = Vec::with_capacity(rows.len() * cov_cols.len());
    let mut ys = Vec::with_capacity(rows.len());
    for r in &rows {
        for (scale, &c) in covariates.iter().zip(&cov_cols) {
            xs.push(scale.apply(r[c]));
        }
        ys.push(response_scale.as_ref().map_or(r[target], |s| s.apply(r[target])));
    }
    let data = Dataset::new(cov_cols.len(), xs, ys)?;
    Ok((
        data,
        Scaling {
            covariates,
            response: response_scale,
            response_name: headers[target].clone(),
        },
    ))
}
