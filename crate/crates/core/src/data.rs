//! Data ingestion and preprocessing.
//!
//! Predictors are mapped into `[0, 1]` by their empirical quantile
//! transform and the response is standardized; both maps are kept so that
//! query points can be transformed and outputs mapped back to the raw
//! scale.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Row-major `n × p` matrix of predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariates {
    n: usize,
    p: usize,
    values: Vec<f64>,
}

impl Covariates {
    pub fn new(n: usize, p: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n * p, "covariate buffer has wrong length");
        Self { n, p, values }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let p = rows.first().map_or(0, Vec::len);
        let values = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(rows.len(), p, values)
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_cols(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.values[i * self.p + j]).collect()
    }
}

/// Empirical quantile map of one column: distinct sorted knots and their
/// midrank images `rank / (N + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileMap {
    knots: Vec<f64>,
    images: Vec<f64>,
}

impl QuantileMap {
    /// Fit to a column; `None` for a constant column.
    pub fn fit(column: &[f64]) -> Option<Self> {
        let n = column.len();
        let mut sorted = column.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut knots = Vec::new();
        let mut images = Vec::new();
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            // ranks i+1..=j+1 share the midrank
            let midrank = 0.5 * ((i + 1) + (j + 1)) as f64;
            knots.push(sorted[i]);
            images.push(midrank / (n + 1) as f64);
            i = j + 1;
        }
        if knots.len() < 2 {
            return None;
        }
        Some(Self { knots, images })
    }

    /// Linear interpolation between knots, clamped outside their range.
    pub fn apply(&self, v: f64) -> f64 {
        let k = &self.knots;
        if v <= k[0] {
            return self.images[0];
        }
        if v >= k[k.len() - 1] {
            return self.images[k.len() - 1];
        }
        let hi = k.partition_point(|&t| t <= v);
        let lo = hi - 1;
        let w = (v - k[lo]) / (k[hi] - k[lo]);
        self.images[lo] + w * (self.images[hi] - self.images[lo])
    }

    /// Value on the raw scale mapped to image `u`.
    pub fn invert(&self, u: f64) -> f64 {
        let im = &self.images;
        if u <= im[0] {
            return self.knots[0];
        }
        if u >= im[im.len() - 1] {
            return self.knots[im.len() - 1];
        }
        let hi = im.partition_point(|&t| t <= u);
        let lo = hi - 1;
        let w = (u - im[lo]) / (im[hi] - im[lo]);
        self.knots[lo] + w * (self.knots[hi] - self.knots[lo])
    }
}

/// All preprocessing maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub predictor_names: Vec<String>,
    pub maps: Vec<QuantileMap>,
    pub y_mean: f64,
    pub y_sd: f64,
}

impl Transform {
    pub fn x_to_unit(&self, raw: &[f64]) -> Vec<f64> {
        self.maps.iter().zip(raw).map(|(m, &v)| m.apply(v)).collect()
    }

    pub fn y_to_std(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_sd
    }

    pub fn y_to_raw(&self, y: f64) -> f64 {
        self.y_mean + self.y_sd * y
    }
}

/// Preprocessed data ready for the sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x: Covariates,
    pub y: Vec<f64>,
    pub transform: Transform,
    /// Raw predictors, kept for summaries on the original scale.
    pub x_raw: Covariates,
    pub y_raw: Vec<f64>,
}

impl Dataset {
    /// Build from raw columns. Constant predictors are dropped with a
    /// warning.
    pub fn from_raw(names: &[String], x_raw: &Covariates, y_raw: &[f64]) -> Result<Self> {
        let n = y_raw.len();
        if n < 3 {
            return Err(Error::Data(format!("need at least 3 observations, got {n}")));
        }
        if x_raw.n_rows() != n {
            return Err(Error::Data("predictor and response lengths differ".into()));
        }
        if x_raw.iter_values().chain(y_raw.iter().copied()).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite value in input".into()));
        }
        let mut kept_names = Vec::new();
        let mut maps = Vec::new();
        let mut kept_cols = Vec::new();
        for j in 0..x_raw.n_cols() {
            let col = x_raw.column(j);
            match QuantileMap::fit(&col) {
                Some(m) => {
                    kept_names.push(names[j].clone());
                    maps.push(m);
                    kept_cols.push(j);
                }
                None => log::warn!("predictor '{}' is constant and was dropped", names[j]),
            }
        }
        if maps.is_empty() {
            return Err(Error::Data("no non-constant predictors".into()));
        }
        let y_mean = crate::stats::mean(y_raw);
        let y_sd = crate::stats::variance(y_raw).sqrt();
        if !(y_sd > 0.0) {
            return Err(Error::Data("response is constant".into()));
        }
        let p = maps.len();
        let mut values = Vec::with_capacity(n * p);
        let mut raw_kept = Vec::with_capacity(n * p);
        for i in 0..n {
            for (m, &j) in maps.iter().zip(&kept_cols) {
                let v = x_raw.row(i)[j];
                values.push(m.apply(v));
                raw_kept.push(v);
            }
        }
        let transform = Transform { predictor_names: kept_names, maps, y_mean, y_sd };
        let y = y_raw.iter().map(|&v| transform.y_to_std(v)).collect();
        Ok(Self {
            x: Covariates::new(n, p, values),
            y,
            transform,
            x_raw: Covariates::new(n, p, raw_kept),
            y_raw: y_raw.to_vec(),
        })
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn n_predictors(&self) -> usize {
        self.x.n_cols()
    }
}

impl Covariates {
    fn iter_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied()
    }
}

/// Raw table read from a CSV with a header row.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub predictor_names: Vec<String>,
    pub x: Covariates,
    pub y: Vec<f64>,
}

/// Read `response` and `predictors` (all other columns when empty).
/// Missing or non-numeric cells are an error.
pub fn read_csv(path: &Path, response: &str, predictors: &[String]) -> Result<RawTable> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("column '{name}' not found in {}", path.display())))
    };
    let y_col = find(response)?;
    let x_cols: Vec<usize> = if predictors.is_empty() {
        (0..header.len()).filter(|&c| c != y_col).collect()
    } else {
        predictors.iter().map(|p| find(p)).collect::<Result<_>>()?
    };
    if x_cols.is_empty() {
        return Err(Error::Data("no predictor columns".into()));
    }
    let mut y = Vec::new();
    let mut values = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let parse = |c: usize| -> Result<f64> {
            let cell = record.get(c).unwrap_or("").trim();
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
                return Err(Error::Data(format!("missing value in row {} column '{}'", line + 2, header[c])));
            }
            cell.parse::<f64>()
                .map_err(|_| Error::Data(format!("non-numeric value '{cell}' in row {} column '{}'", line + 2, header[c])))
        };
        y.push(parse(y_col)?);
        for &c in &x_cols {
            values.push(parse(c)?);
        }
    }
    let n = y.len();
    Ok(RawTable {
        predictor_names: x_cols.iter().map(|&c| header[c].clone()).collect(),
        x: Covariates::new(n, x_cols.len(), values),
        y,
    })
}

/// Write a table with header `names..., response`.
pub fn write_csv(path: &Path, names: &[String], response: &str, x: &Covariates, y: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = names.iter().map(String::as_str).collect();
    header.push(response);
    w.write_record(&header)?;
    for i in 0..y.len() {
        let mut rec: Vec<String> = x.row(i).iter().map(|v| format!("{v:.17e}")).collect();
        rec.push(format!("{:.17e}", y[i]));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
