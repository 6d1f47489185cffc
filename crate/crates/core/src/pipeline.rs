//! End-to-end fit: ingest, sample, evaluate densities, write outputs.

use std::path::{Path, PathBuf};

use crate::base_model::least_squares;
use crate::config::RunConfig;
use crate::data::{read_csv, Dataset};
use crate::density::{evaluate_state, posterior_summary, uniform_grid, DensityGrid, DensitySummary};
use crate::output::{self, Manifest};
use crate::sampler::{run_chains, ChainOutput, ChainSettings, Draw};
use crate::stats::quantile;
use crate::{Error, Result};

/// Posterior evaluation on the raw scale.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub y_grid_raw: Vec<f64>,
    pub x_queries_raw: Vec<Vec<f64>>,
    /// `densities[d][q][g]` on the raw scale.
    pub densities: Vec<Vec<Vec<f64>>>,
    /// `means[d][q]` on the raw scale.
    pub means: Vec<Vec<f64>>,
    pub summary: DensitySummary,
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
    pub evaluation: Evaluation,
}

pub fn chain_settings(cfg: &RunConfig) -> ChainSettings {
    ChainSettings {
        iterations: cfg.mcmc.iterations,
        burn_in: cfg.mcmc.burn_in,
        thin: cfg.mcmc.thin,
        rejection_cap: cfg.mcmc.rejection_cap,
        n_trees: cfg.model.n_trees,
        link: cfg.link(),
        kernel: cfg.kernel_family(),
    }
}

/// Standardized-scale output grid: the data range widened by `margin`
/// residual sds of a least-squares fit.
pub fn default_y_grid(data: &Dataset, margin: f64, n: usize) -> Result<Vec<f64>> {
    let sd = least_squares(&data.x, &data.y)?.sigma;
    let lo = data.y.iter().copied().fold(f64::INFINITY, f64::min) - margin * sd;
    let hi = data.y.iter().copied().fold(f64::NEG_INFINITY, f64::max) + margin * sd;
    Ok(uniform_grid(lo, hi, n))
}

/// Raw-scale default queries: the first predictor at its 10/30/50/70/90%
/// quantiles, the others at their medians.
pub fn default_queries(data: &Dataset) -> Vec<Vec<f64>> {
    let p = data.n_predictors();
    let medians: Vec<f64> = (0..p).map(|j| quantile(&data.x_raw.column(j), 0.5)).collect();
    let first = data.x_raw.column(0);
    [0.1, 0.3, 0.5, 0.7, 0.9]
        .iter()
        .map(|&q| {
            let mut row = medians.clone();
            row[0] = quantile(&first, q);
            row
        })
        .collect()
}

/// Densities and predictive means of every draw at every query, mapped to
/// the raw scale. Work is split over threads by draw; results do not
/// depend on the split.
pub fn evaluate_draws(
    data: &Dataset,
    draws: &[&Draw],
    y_grid_std: &[f64],
    x_queries_raw: &[Vec<f64>],
    level: f64,
) -> Result<Evaluation> {
    let t = &data.transform;
    let queries_unit: Vec<Vec<f64>> = x_queries_raw.iter().map(|q| t.x_to_unit(q)).collect();
    let n_threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(draws.len().max(1));
    let chunk = draws.len().div_ceil(n_threads).max(1);
    let parts: Vec<Result<Vec<(Vec<Vec<f64>>, Vec<f64>)>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = draws
            .chunks(chunk)
            .map(|part| {
                let queries_unit = &queries_unit;
                scope.spawn(move || {
                    part.iter()
                        .map(|d| {
                            let mut dens = Vec::with_capacity(queries_unit.len());
                            let mut means = Vec::with_capacity(queries_unit.len());
                            for q in queries_unit {
                                let e = evaluate_state(&d.state, q, y_grid_std)?;
                                dens.push(e.values.iter().map(|v| v / t.y_sd).collect());
                                means.push(t.y_to_raw(e.mean));
                            }
                            Ok((dens, means))
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation thread panicked")).collect()
    });
    let mut densities = Vec::with_capacity(draws.len());
    let mut means = Vec::with_capacity(draws.len());
    for part in parts {
        for (d, m) in part? {
            densities.push(d);
            means.push(m);
        }
    }
    let y_grid_raw: Vec<f64> = y_grid_std.iter().map(|&y| t.y_to_raw(y)).collect();
    let grid = DensityGrid { y_grid: y_grid_raw.clone(), x_queries: x_queries_raw.to_vec(), draws: densities };
    let summary = posterior_summary(&grid, level);
    Ok(Evaluation {
        y_grid_raw,
        x_queries_raw: x_queries_raw.to_vec(),
        densities: grid.draws,
        means,
        summary,
    })
}

/// Indices of at most `max` evenly spaced items out of `n` (all when
/// `max` is zero or at least `n`).
pub fn spaced_indices(n: usize, max: usize) -> Vec<usize> {
    if max == 0 || max >= n {
        return (0..n).collect();
    }
    (0..max).map(|k| k * n / max).collect()
}

/// Load the configured data, run the chains and write every output file.
pub fn fit(cfg: &RunConfig) -> Result<FitReport> {
    cfg.validate()?;
    let table = read_csv(&cfg.data.path, &cfg.data.response, &cfg.data.predictors)?;
    let data = Dataset::from_raw(&table.predictor_names, &table.x, &table.y)?;
    fit_dataset(cfg, &data)
}

pub fn fit_dataset(cfg: &RunConfig, data: &Dataset) -> Result<FitReport> {
    if matches!(cfg.link(), crate::links::Link::Probit) {
        log::info!(
            "probit link: its hazard ratio is unbounded, so the Lipschitz-type guarantees that hold for the logit and t links do not apply"
        );
    }
    let hp = cfg.hyperpriors();
    let settings = chain_settings(cfg);
    let chains = run_chains(&data.x, &data.y, &hp, &settings, cfg.mcmc.seed, cfg.mcmc.chains)?;
    let draws: Vec<&Draw> = chains.iter().flat_map(|c| c.draws.iter()).collect();

    let queries = if cfg.output.x_queries.is_empty() {
        default_queries(data)
    } else {
        for q in &cfg.output.x_queries {
            if q.len() != data.n_predictors() {
                return Err(Error::Config(format!(
                    "query point has {} coordinates, data has {} predictors",
                    q.len(),
                    data.n_predictors()
                )));
            }
        }
        cfg.output.x_queries.clone()
    };
    let y_grid = default_y_grid(data, cfg.output.y_grid_sd_margin, cfg.output.y_grid_points)?;
    let evaluation = evaluate_draws(data, &draws, &y_grid, &queries, cfg.output.band_level)?;

    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir)?;
    write_all(dir, cfg, data, &chains, &draws, &evaluation)
        .map(|manifest| FitReport { out_dir: dir.clone(), manifest, evaluation })
}

fn write_all(
    dir: &Path,
    cfg: &RunConfig,
    data: &Dataset,
    chains: &[ChainOutput],
    draws: &[&Draw],
    ev: &Evaluation,
) -> Result<Manifest> {
    let keep = spaced_indices(ev.densities.len(), cfg.output.max_density_draws);
    let selected: Vec<(usize, Vec<Vec<f64>>)> = keep.iter().map(|&d| (d, ev.densities[d].clone())).collect();
    output::write_densities(dir, &ev.y_grid_raw, &selected)?;
    output::write_density_summary(dir, &ev.summary, &ev.x_queries_raw)?;
    output::write_predictive_mean(dir, &ev.means, ev.x_queries_raw.len())?;
    let names = &data.transform.predictor_names;
    output::write_split_proportions(dir, names, draws)?;
    output::write_base_coefficients(dir, names, draws)?;
    output::write_rejected_trace(dir, chains)?;
    output::write_trace(dir, chains)?;
    output::write_checkpoint(dir, chains)?;
    let manifest = Manifest {
        package: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.mcmc.seed,
        chains: cfg.mcmc.chains,
        n_obs: data.n_obs(),
        predictors: names.clone(),
        n_draws: draws.len(),
        tree_acceptance: chains.iter().map(|c| c.tree_acceptance).collect(),
        basis_acceptance: chains.iter().map(|c| c.basis_acceptance).collect(),
        files: [
            output::DENSITIES,
            output::DENSITY_SUMMARY,
            output::PREDICTIVE_MEAN,
            output::SPLIT_PROPORTIONS,
            output::BASE_COEFFICIENTS,
            output::REJECTED_TRACE,
            output::TRACE,
            output::CHECKPOINT,
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
        config: cfg.clone(),
    };
    output::write_manifest(dir, &manifest)?;
    Ok(manifest)
}
