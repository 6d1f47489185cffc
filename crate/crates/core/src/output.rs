//! Output files of a fit. All values are on the raw response scale except
//! the base-model coefficients, which refer to the standardized response
//! and the quantile-transformed predictors the sampler works with.
//!
//! Floats are written with their shortest round-trip representation, so
//! identical runs give byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::density::DensitySummary;
use crate::sampler::{ChainOutput, Draw};
use crate::stats::quantile_sorted;
use crate::{ChainRng, Result};

pub const DENSITIES: &str = "densities.csv";
pub const DENSITY_SUMMARY: &str = "density_summary.json";
pub const PREDICTIVE_MEAN: &str = "predictive_mean.csv";
pub const SPLIT_PROPORTIONS: &str = "split_proportions.csv";
pub const BASE_COEFFICIENTS: &str = "base_coefficients.csv";
pub const REJECTED_TRACE: &str = "rejected_trace.csv";
pub const TRACE: &str = "trace.csv";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const MANIFEST: &str = "manifest.json";

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Summary of a scalar across draws: mean, median and 66%/95% intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalarSummary {
    pub mean: f64,
    pub median: f64,
    pub q025: f64,
    pub q17: f64,
    pub q83: f64,
    pub q975: f64,
}

impl ScalarSummary {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Self {
            mean: crate::stats::mean(&v),
            median: quantile_sorted(&v, 0.5),
            q025: quantile_sorted(&v, 0.025),
            q17: quantile_sorted(&v, 0.17),
            q83: quantile_sorted(&v, 0.83),
            q975: quantile_sorted(&v, 0.975),
        }
    }

    fn csv_fields(&self) -> String {
        format!("{},{},{},{},{},{}", self.mean, self.median, self.q025, self.q17, self.q83, self.q975)
    }
}

const SUMMARY_HEADER: &str = "mean,median,q025,q17,q83,q975";

/// Long-format density draws `draw,x_id,y,density`.
pub fn write_densities(dir: &Path, y_grid: &[f64], draws: &[(usize, Vec<Vec<f64>>)]) -> Result<()> {
    let mut w = create(dir, DENSITIES)?;
    writeln!(w, "draw,x_id,y,density")?;
    for (d, per_x) in draws {
        for (q, values) in per_x.iter().enumerate() {
            for (y, v) in y_grid.iter().zip(values) {
                writeln!(w, "{d},{q},{y},{v}")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    level: f64,
    y_grid: &'a [f64],
    x_queries: &'a [Vec<f64>],
    mean: &'a [Vec<f64>],
    lower: &'a [Vec<f64>],
    upper: &'a [Vec<f64>],
}

pub fn write_density_summary(dir: &Path, summary: &DensitySummary, x_queries: &[Vec<f64>]) -> Result<()> {
    let doc = SummaryDoc {
        level: summary.level,
        y_grid: &summary.y_grid,
        x_queries,
        mean: &summary.mean,
        lower: &summary.lower,
        upper: &summary.upper,
    };
    let mut w = create(dir, DENSITY_SUMMARY)?;
    serde_json::to_writer_pretty(&mut w, &doc)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// `means[d][q]` is the predictive mean of draw `d` at query `q`.
pub fn write_predictive_mean(dir: &Path, means: &[Vec<f64>], n_queries: usize) -> Result<()> {
    let mut w = create(dir, PREDICTIVE_MEAN)?;
    writeln!(w, "x_id,{SUMMARY_HEADER}")?;
    for q in 0..n_queries {
        let col: Vec<f64> = means.iter().map(|m| m[q]).collect();
        writeln!(w, "{q},{}", ScalarSummary::of(&col).csv_fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_split_proportions(dir: &Path, names: &[String], draws: &[&Draw]) -> Result<()> {
    let mut w = create(dir, SPLIT_PROPORTIONS)?;
    writeln!(w, "predictor,{SUMMARY_HEADER}")?;
    for (j, name) in names.iter().enumerate() {
        let col: Vec<f64> = draws.iter().map(|d| d.state.split_probs[j]).collect();
        writeln!(w, "{name},{}", ScalarSummary::of(&col).csv_fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_base_coefficients(dir: &Path, names: &[String], draws: &[&Draw]) -> Result<()> {
    let mut w = create(dir, BASE_COEFFICIENTS)?;
    writeln!(w, "parameter,{SUMMARY_HEADER}")?;
    let intercept: Vec<f64> = draws.iter().map(|d| d.state.theta.intercept).collect();
    writeln!(w, "intercept,{}", ScalarSummary::of(&intercept).csv_fields())?;
    for (j, name) in names.iter().enumerate() {
        let col: Vec<f64> = draws.iter().map(|d| d.state.theta.coefs[j]).collect();
        writeln!(w, "{name},{}", ScalarSummary::of(&col).csv_fields())?;
    }
    let sigma: Vec<f64> = draws.iter().map(|d| d.state.theta.sigma).collect();
    writeln!(w, "sigma,{}", ScalarSummary::of(&sigma).csv_fields())?;
    w.flush()?;
    Ok(())
}

pub fn write_rejected_trace(dir: &Path, chains: &[ChainOutput]) -> Result<()> {
    let mut w = create(dir, REJECTED_TRACE)?;
    writeln!(w, "chain,iteration,total_rejected")?;
    for c in chains {
        for (it, j) in c.rejected_trace.iter().enumerate() {
            writeln!(w, "{},{it},{j}", c.chain)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Scalar trace of the retained draws.
pub fn write_trace(dir: &Path, chains: &[ChainOutput]) -> Result<()> {
    let mut w = create(dir, TRACE)?;
    writeln!(w, "chain,iteration,gamma,sigma_mu,dirichlet_conc,length_scale,mean_depth,total_leaves,total_rejected")?;
    for c in chains {
        for d in &c.draws {
            let s = &d.state;
            let leaves: usize = s.trees.iter().map(|t| t.n_leaves()).sum();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                d.chain,
                d.iteration,
                s.gamma,
                s.sigma_mu,
                s.dirichlet_conc,
                s.kernel.length_scale,
                s.mean_depth(),
                leaves,
                d.total_rejected
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CheckpointChain<'a> {
    chain: usize,
    state: &'a crate::backfitting::ForestState,
    rng: &'a ChainRng,
}

#[derive(Serialize)]
struct Checkpoint<'a> {
    format_version: u32,
    chains: Vec<CheckpointChain<'a>>,
}

/// Final state and generator of every chain.
pub fn write_checkpoint(dir: &Path, chains: &[ChainOutput]) -> Result<()> {
    let doc = Checkpoint {
        format_version: 1,
        chains: chains
            .iter()
            .map(|c| CheckpointChain { chain: c.chain, state: &c.final_state, rng: &c.final_rng })
            .collect(),
    };
    let mut w = create(dir, CHECKPOINT)?;
    serde_json::to_writer(&mut w, &doc)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Machine-readable record of a run, sufficient to repeat it.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Manifest {
    pub package: String,
    pub version: String,
    pub seed: u64,
    pub chains: usize,
    pub n_obs: usize,
    pub predictors: Vec<String>,
    pub n_draws: usize,
    pub tree_acceptance: Vec<f64>,
    pub basis_acceptance: Vec<f64>,
    pub files: Vec<String>,
    pub config: RunConfig,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<PathBuf> {
    let path = dir.join(MANIFEST);
    let mut w = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(&mut w, manifest)?;
    writeln!(w)?;
    w.flush()?;
    Ok(path)
}
