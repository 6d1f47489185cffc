//! Normalized conditional densities and their posterior summaries.
//!
//! `f(y | x) = h(y | x, θ) Φ{r(y, x)} / ∫ h Φ{r} dỹ`. The normalizer is
//! computed by composite Simpson quadrature on a uniform grid that extends
//! well past both the output grid and the bulk of `h`; everything is done
//! in log space so a state with tiny acceptance probabilities still
//! normalizes.

use serde::{Deserialize, Serialize};

use crate::backfitting::ForestState;
use crate::base_model::BaseModelParams;
use crate::links::Link;
use crate::stats::quantile_sorted;
use crate::{Error, Result};

/// Largest number of quadrature nodes used for one normalizer.
const MAX_NODES: usize = 200_001;

/// Composite Simpson weights for `n` uniformly spaced points with spacing
/// `h`. An odd number of intervals closes with the 3/8 rule on the last
/// three.
pub fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    assert!(n >= 2, "need at least two points");
    let mut w = vec![0.0; n];
    if n == 2 {
        w[0] = 0.5 * h;
        w[1] = 0.5 * h;
        return w;
    }
    if n == 3 || (n - 1) % 2 == 0 {
        let m = n;
        for i in 0..m {
            w[i] = if i == 0 || i == m - 1 {
                h / 3.0
            } else if i % 2 == 1 {
                4.0 * h / 3.0
            } else {
                2.0 * h / 3.0
            };
        }
        return w;
    }
    if n == 4 {
        let c = 3.0 * h / 8.0;
        return vec![c, 3.0 * c, 3.0 * c, c];
    }
    // Simpson on the first n - 3 points, 3/8 on the last four.
    let m = n - 3;
    for i in 0..m {
        w[i] = if i == 0 || i == m - 1 {
            h / 3.0
        } else if i % 2 == 1 {
            4.0 * h / 3.0
        } else {
            2.0 * h / 3.0
        };
    }
    let c = 3.0 * h / 8.0;
    w[m - 1] += c;
    w[m] += 3.0 * c;
    w[m + 1] += 3.0 * c;
    w[m + 2] += c;
    w
}

/// Simpson integral of values on a uniform grid.
pub fn integrate_uniform(values: &[f64], grid: &[f64]) -> f64 {
    let h = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    simpson_weights(grid.len(), h).iter().zip(values).map(|(w, v)| w * v).sum()
}

/// `n` equally spaced points on `[lo, hi]`.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && hi > lo, "invalid grid");
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| if i + 1 == n { hi } else { lo + i as f64 * h }).collect()
}

/// Uniform quadrature nodes with Simpson weights.
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    /// Nodes covering the output grid plus `3 sd` and the base mean
    /// `± 8 sd`, with spacing at most `sd / 16`, the output spacing, and a
    /// sixteenth of the shortest basis period.
    pub fn for_density(y_grid: &[f64], center: f64, sd: f64, max_omega: f64) -> Self {
        let lo = (y_grid[0] - 3.0 * sd).min(center - 8.0 * sd);
        let hi = (y_grid[y_grid.len() - 1] + 3.0 * sd).max(center + 8.0 * sd);
        let mut h = sd / 16.0;
        if y_grid.len() > 1 {
            h = h.min((y_grid[y_grid.len() - 1] - y_grid[0]) / (y_grid.len() - 1) as f64);
        }
        if max_omega > 0.0 {
            h = h.min(2.0 * std::f64::consts::PI / (16.0 * max_omega));
        }
        let mut n = ((hi - lo) / h).ceil() as usize + 1;
        n = n.clamp(65, MAX_NODES);
        if n % 2 == 0 {
            n += 1;
        }
        let nodes = uniform_grid(lo, hi, n);
        let step = (hi - lo) / (n - 1) as f64;
        Self { weights: simpson_weights(n, step), nodes }
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// One normalized tilted density.
#[derive(Debug, Clone)]
pub struct TiltedDensity {
    /// Density at the output grid points.
    pub values: Vec<f64>,
    /// `∫ y f(y) dy`.
    pub mean: f64,
    /// `ln ∫ h Φ{r} dy`.
    pub log_normalizer: f64,
}

/// Normalize `exp(log_num(y))` over `quad` and evaluate it on `y_grid`.
pub fn normalize_log_numerator(
    log_num: impl Fn(f64) -> f64,
    quad: &Quadrature,
    y_grid: &[f64],
) -> Result<TiltedDensity> {
    let logs: Vec<f64> = quad.nodes.iter().map(|&y| log_num(y)).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateDensity(0.0));
    }
    let scaled: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let z = quad.integrate(&scaled);
    let log_normalizer = max + z.ln();
    if !(log_normalizer > (1e-300f64).ln()) {
        return Err(Error::DegenerateDensity(log_normalizer.exp()));
    }
    let first: Vec<f64> = scaled.iter().zip(&quad.nodes).map(|(s, y)| s * y).collect();
    let mean = quad.integrate(&first) / z;
    let values = y_grid.iter().map(|&y| (log_num(y) - log_normalizer).exp()).collect();
    Ok(TiltedDensity { values, mean, log_normalizer })
}

/// `h(y | x, θ) Φ{r(y)}` normalized, for any tilt `r`.
pub fn tilted_density(
    theta: &BaseModelParams,
    x: &[f64],
    link: &Link,
    r: impl Fn(f64) -> f64,
    y_grid: &[f64],
    max_omega: f64,
) -> Result<TiltedDensity> {
    let quad = Quadrature::for_density(y_grid, theta.mean(x), theta.sigma, max_omega);
    normalize_log_numerator(|y| theta.log_density(x, y) + link.log_cdf(r(y)), &quad, y_grid)
}

/// Largest frequency among trees with a nonzero contribution.
fn active_max_omega(state: &ForestState, g: &[f64]) -> f64 {
    state
        .trees
        .iter()
        .zip(g)
        .filter(|(_, &gm)| gm != 0.0)
        .map(|(t, _)| t.basis.omega.abs())
        .fold(0.0, f64::max)
}

/// Density and mean of `f(· | x)` for a state.
pub fn evaluate_state(state: &ForestState, x: &[f64], y_grid: &[f64]) -> Result<TiltedDensity> {
    if y_grid.len() < 2 {
        return Err(Error::Config("y grid needs at least two points".into()));
    }
    let g = state.tree_outputs(x);
    let max_omega = active_max_omega(state, &g);
    tilted_density(&state.theta, x, &state.link, |y| state.eval_r_from_outputs(y, &g), y_grid, max_omega)
}

pub fn conditional_density(state: &ForestState, x: &[f64], y_grid: &[f64]) -> Result<Vec<f64>> {
    Ok(evaluate_state(state, x, y_grid)?.values)
}

pub fn predictive_mean(state: &ForestState, x: &[f64], y_grid: &[f64]) -> Result<f64> {
    Ok(evaluate_state(state, x, y_grid)?.mean)
}

/// Posterior draws of `f(y | x)` on a grid: `draws[d][q][g]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub y_grid: Vec<f64>,
    pub x_queries: Vec<Vec<f64>>,
    pub draws: Vec<Vec<Vec<f64>>>,
}

/// Pointwise mean and equal-tailed band per query point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySummary {
    pub y_grid: Vec<f64>,
    pub level: f64,
    pub mean: Vec<Vec<f64>>,
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
}

pub fn posterior_summary(grid: &DensityGrid, level: f64) -> DensitySummary {
    let n_draws = grid.draws.len();
    assert!(n_draws > 0, "no draws to summarize");
    let lo_p = 0.5 * (1.0 - level);
    let hi_p = 1.0 - lo_p;
    let n_q = grid.x_queries.len();
    let n_y = grid.y_grid.len();
    let mut mean = vec![vec![0.0; n_y]; n_q];
    let mut lower = vec![vec![0.0; n_y]; n_q];
    let mut upper = vec![vec![0.0; n_y]; n_q];
    let mut column = vec![0.0; n_draws];
    for q in 0..n_q {
        for g in 0..n_y {
            for (d, draw) in grid.draws.iter().enumerate() {
                column[d] = draw[q][g];
            }
            mean[q][g] = column.iter().sum::<f64>() / n_draws as f64;
            column.sort_by(f64::total_cmp);
            lower[q][g] = quantile_sorted(&column, lo_p);
            upper[q][g] = quantile_sorted(&column, hi_p);
        }
    }
    DensitySummary { y_grid: grid.y_grid.clone(), level, mean, lower, upper }
}

/// Covariate-averaged `∫ |f0(y | x) - f̂(y | x)| dy`, with `fhat[k]` the
/// estimate at `x_sample[k]` on `y_grid`.
pub fn tv_distance(
    f0: impl Fn(&[f64], f64) -> f64,
    fhat: &[Vec<f64>],
    x_sample: &[Vec<f64>],
    y_grid: &[f64],
) -> f64 {
    assert_eq!(fhat.len(), x_sample.len());
    let total: f64 = x_sample
        .iter()
        .zip(fhat)
        .map(|(x, fh)| {
            let diff: Vec<f64> = y_grid.iter().zip(fh).map(|(&y, &v)| (f0(x, y) - v).abs()).collect();
            integrate_uniform(&diff, y_grid)
        })
        .sum();
    total / x_sample.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base_model::base_density;
    use crate::special::{norm_cdf, norm_pdf};
    use approx::assert_abs_diff_eq;

    #[test]
    fn simpson_exact_on_cubics() {
        for n in [3, 4, 5, 8, 9, 12, 101, 102] {
            let g = uniform_grid(-1.0, 2.0, n);
            let v: Vec<f64> = g.iter().map(|y| y * y * y - 2.0 * y + 1.0).collect();
            // ∫_{-1}^{2} y³ - 2y + 1 dy = 15/4 - 3 + 3
            assert_abs_diff_eq!(integrate_uniform(&v, &g), 3.75, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_tilt_cancels() {
        let theta = BaseModelParams::new(0.4, vec![1.0], 0.7);
        let x = [0.3];
        let grid = uniform_grid(-2.0, 3.0, 512);
        for link in [Link::Probit, Link::Logit, Link::StudentT { nu: 3.0 }] {
            let d = tilted_density(&theta, &x, &link, |_| -1.3, &grid, 0.0).unwrap();
            for (y, v) in grid.iter().zip(&d.values) {
                assert_abs_diff_eq!(*v, base_density(&theta, &x, *y), epsilon = 1e-10);
            }
            assert_abs_diff_eq!(d.mean, 0.7, epsilon = 1e-9);
        }
    }

    #[test]
    fn tiny_acceptance_still_normalizes() {
        let theta = BaseModelParams::standard(1);
        let grid = uniform_grid(-4.0, 4.0, 200);
        let d = tilted_density(&theta, &[0.5], &Link::Probit, |_| -35.0, &grid, 0.0).unwrap();
        assert_abs_diff_eq!(d.values[100], base_density(&theta, &[0.5], grid[100]), epsilon = 1e-10);
    }

    #[test]
    fn symmetric_tilt_has_zero_mean() {
        let theta = BaseModelParams::standard(1);
        let grid = uniform_grid(-6.0, 6.0, 301);
        // Φ(4y²-4) pushes mass to ±1 symmetrically
        let d = tilted_density(&theta, &[0.0], &Link::Logit, |y| 4.0 * y * y - 4.0, &grid, 0.0).unwrap();
        assert_abs_diff_eq!(d.mean, 0.0, epsilon = 1e-6);
    }

    #[test]
    fn tv_between_shifted_normals() {
        let grid = uniform_grid(-12.0, 12.0, 4001);
        let fhat = vec![grid.iter().map(|&y| norm_pdf(y - 0.5)).collect::<Vec<_>>()];
        let tv = tv_distance(|_, y| norm_pdf(y), &fhat, &[vec![0.0]], &grid);
        assert_abs_diff_eq!(tv, 2.0 * (2.0 * norm_cdf(0.25) - 1.0), epsilon = 1e-6);
        let same = tv_distance(|_, y| norm_pdf(y - 0.5), &fhat, &[vec![0.0]], &grid);
        assert!(same < 1e-12);
    }

    #[test]
    fn identical_draws_collapse_bands() {
        let curve = vec![0.1, 0.5, 0.2];
        let grid = DensityGrid { y_grid: vec![0.0, 1.0, 2.0], x_queries: vec![vec![0.5]], draws: vec![vec![curve.clone()]; 7] };
        let s = posterior_summary(&grid, 0.95);
        for g in 0..3 {
            assert_abs_diff_eq!(s.mean[0][g], curve[g], epsilon = 1e-15);
            assert_abs_diff_eq!(s.lower[0][g], s.upper[0][g]);
        }
    }
}
