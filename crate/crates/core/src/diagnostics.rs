//! Convergence summaries computed from a fit's `trace.csv`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::output::TRACE;
use crate::stats::{batch_means_se, mean, split_rhat};
use crate::{Error, Result};

/// Trace columns keyed by name, each split by chain.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub columns: Vec<String>,
    /// `series[column][chain]`.
    pub series: Vec<Vec<Vec<f64>>>,
}

impl Trace {
    pub fn read(dir: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(dir.join(TRACE))?;
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if header.first().map(String::as_str) != Some("chain") || header.get(1).map(String::as_str) != Some("iteration") {
            return Err(Error::Data(format!("{TRACE}: unexpected header")));
        }
        let columns: Vec<String> = header[2..].to_vec();
        let mut by_chain: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
        for record in reader.records() {
            let record = record?;
            let chain: usize = record[0]
                .parse()
                .map_err(|_| Error::Data(format!("{TRACE}: bad chain index '{}'", &record[0])))?;
            let entry = by_chain.entry(chain).or_insert_with(|| vec![Vec::new(); columns.len()]);
            for (c, col) in entry.iter_mut().enumerate() {
                let cell = &record[c + 2];
                col.push(cell.parse().map_err(|_| Error::Data(format!("{TRACE}: bad value '{cell}'")))?);
            }
        }
        let mut series = vec![Vec::new(); columns.len()];
        for per_col in by_chain.into_values() {
            for (c, s) in per_col.into_iter().enumerate() {
                series[c].push(s);
            }
        }
        Ok(Self { columns, series })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamDiagnostics {
    pub name: String,
    pub mean: f64,
    /// Batch-means standard error over the pooled draws (20 batches).
    pub mcse: f64,
    /// Split R-hat; `NaN` with too few draws.
    pub rhat: f64,
}

pub fn summarize_trace(trace: &Trace) -> Vec<ParamDiagnostics> {
    trace
        .columns
        .iter()
        .zip(&trace.series)
        .map(|(name, chains)| {
            let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
            let mcse = if pooled.len() >= 40 { batch_means_se(&pooled, 20) } else { f64::NAN };
            ParamDiagnostics { name: name.clone(), mean: mean(&pooled), mcse, rhat: split_rhat(chains) }
        })
        .collect()
}
