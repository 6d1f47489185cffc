//! Bayesian backfitting over the soft-tree ensemble.
//!
//! Given augmented rows with latent utilities `Z` and precisions `λ`,
//! tree `k` sees the partial residual
//!
//! ```text
//! R_row = Z_row - γ - Σ_{m≠k} B_m(Y_row) g(X_row; T_m, M_m)
//! ```
//!
//! which is Gaussian with mean `B_k(Y_row) φ_k(X_row)ᵀ μ_k` and precision
//! `λ_row`. With `μ_k ~ N(0, λ_μ⁻¹ I)`, `λ_μ = M / σ_μ²`, the leaf values
//! integrate out in closed form; topology, basis and bandwidth moves are
//! scored with that collapsed likelihood and the leaves are then redrawn
//! from their Gaussian full conditional.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, RngExt};
use rand_distr::{Beta, Distribution, Exp, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::augmentation::AugmentedData;
use crate::base_model::{BaseModelParams, ThetaPrior};
use crate::data::Covariates;
use crate::fourier_basis::{sample_basis, BasisFunction, Kernel, KernelFamily};
use crate::links::Link;
use crate::slice::slice_sample;
use crate::soft_trees::{propose_tree, sample_tree_prior, tree_log_prior, MoveKind, MoveWeights, SoftTree, TreePrior};
use crate::special::{ln_gamma, LN_SQRT_2PI};
use crate::stats::{ln_gamma_variate, normalize_log_weights};
use crate::{Error, Result};

/// Prior hyperparameters and proposal tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperpriors {
    pub alpha: f64,
    pub beta: f64,
    pub max_depth: usize,
    /// Scale of the half-Cauchy prior on `σ_μ`.
    pub sigma_mu_scale: f64,
    /// Optional upper truncation of that prior.
    #[serde(default)]
    pub sigma_mu_upper: Option<f64>,
    pub gamma_mean: f64,
    pub gamma_sd: f64,
    /// Mean of the exponential prior on each bandwidth.
    pub tau_mean: f64,
    /// Beta prior on `a / (a + P)`.
    pub a_beta_shape1: f64,
    pub a_beta_shape2: f64,
    /// Gamma prior (shape, rate) on `ρ²`.
    pub rho2_shape: f64,
    pub rho2_rate: f64,
    pub move_weights: MoveWeights,
    pub theta_prior: ThetaPrior,
    pub tau_step: f64,
    pub a_step: f64,
    pub rho_step: f64,
    pub slice_width: f64,
    pub slice_max_steps: usize,
}

impl Default for Hyperpriors {
    fn default() -> Self {
        Self {
            alpha: 0.95,
            beta: 2.0,
            max_depth: 12,
            sigma_mu_scale: 1.5,
            sigma_mu_upper: None,
            gamma_mean: 1.0,
            gamma_sd: 1.0,
            tau_mean: 0.1,
            a_beta_shape1: 0.5,
            a_beta_shape2: 1.0,
            rho2_shape: 1.0,
            rho2_rate: PI * PI / 4.0,
            move_weights: MoveWeights::default(),
            theta_prior: ThetaPrior::Flat,
            tau_step: 0.3,
            a_step: 0.5,
            rho_step: 0.5,
            slice_width: 0.5,
            slice_max_steps: 50,
        }
    }
}

impl Hyperpriors {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let positive = [
            ("sigma_mu_scale", self.sigma_mu_scale),
            ("gamma_sd", self.gamma_sd),
            ("tau_mean", self.tau_mean),
            ("a_beta_shape1", self.a_beta_shape1),
            ("a_beta_shape2", self.a_beta_shape2),
            ("rho2_shape", self.rho2_shape),
            ("rho2_rate", self.rho2_rate),
            ("tau_step", self.tau_step),
            ("a_step", self.a_step),
            ("rho_step", self.rho_step),
            ("slice_width", self.slice_width),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if let Some(u) = self.sigma_mu_upper {
            if !(u > 0.0) {
                return Err(format!("sigma_mu_upper must be positive, got {u}"));
            }
        }
        if !(self.alpha >= 0.0 && self.alpha < 1.0) {
            return Err(format!("alpha must lie in [0, 1), got {}", self.alpha));
        }
        if !(self.beta >= 0.0) {
            return Err(format!("beta must be nonnegative, got {}", self.beta));
        }
        Ok(())
    }
}

/// Full parameter state of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestState {
    pub trees: Vec<SoftTree>,
    pub gamma: f64,
    pub sigma_mu: f64,
    pub split_probs: Vec<f64>,
    /// Dirichlet concentration `a`; the prior on `s` is `Dir(a/P, ..., a/P)`.
    pub dirichlet_conc: f64,
    pub kernel: Kernel,
    pub theta: BaseModelParams,
    pub link: Link,
}

impl ForestState {
    /// Starting state: stumps with zero leaves, so that `f = h`.
    pub fn initial<R: Rng + ?Sized>(
        rng: &mut R,
        hp: &Hyperpriors,
        n_trees: usize,
        family: KernelFamily,
        link: Link,
        theta: BaseModelParams,
    ) -> Self {
        let p = theta.coefs.len();
        let kernel = Kernel::new(family, (hp.rho2_shape / hp.rho2_rate).sqrt());
        let trees = (0..n_trees)
            .map(|_| SoftTree::stump(hp.tau_mean, sample_basis(rng, &kernel)))
            .collect();
        Self {
            trees,
            gamma: hp.gamma_mean,
            sigma_mu: hp.sigma_mu_upper.map_or(hp.sigma_mu_scale, |u| hp.sigma_mu_scale.min(0.5 * u)),
            split_probs: vec![1.0 / p as f64; p],
            dirichlet_conc: 1.0,
            kernel,
            theta,
            link,
        }
    }

    /// Joint draw from the prior. Requires a proper prior on `θ`.
    pub fn sample_prior<R: Rng + ?Sized>(
        rng: &mut R,
        hp: &Hyperpriors,
        n_trees: usize,
        family: KernelFamily,
        link: Link,
        p: usize,
    ) -> Result<Self> {
        let theta = hp
            .theta_prior
            .sample(rng)
            .ok_or_else(|| Error::Config("prior draws need a proper prior on theta".into()))?;
        if theta.coefs.len() != p {
            return Err(Error::Config("theta prior dimension does not match predictors".into()));
        }
        let gamma = hp.gamma_mean + hp.gamma_sd * rng.sample::<f64, _>(StandardNormal);
        let upper = hp.sigma_mu_upper.unwrap_or(f64::INFINITY);
        let sigma_mu = hp.sigma_mu_scale * (rng.random::<f64>() * (upper / hp.sigma_mu_scale).atan()).tan();
        let u: f64 = Beta::new(hp.a_beta_shape1, hp.a_beta_shape2).expect("valid").sample(rng);
        let dirichlet_conc = p as f64 * u / (1.0 - u);
        let split_probs = crate::stats::sample_dirichlet(rng, &vec![dirichlet_conc / p as f64; p]);
        let rho2: f64 = Gamma::new(hp.rho2_shape, 1.0 / hp.rho2_rate).expect("valid").sample(rng);
        let kernel = Kernel::new(family, rho2.sqrt());
        let tree_prior = TreePrior { alpha: hp.alpha, beta: hp.beta, max_depth: hp.max_depth, split_probs: &split_probs };
        let leaf_sd = sigma_mu / (n_trees as f64).sqrt();
        let tau_dist = Exp::new(1.0 / hp.tau_mean).expect("valid");
        let trees = (0..n_trees)
            .map(|_| {
                let mut t = sample_tree_prior(rng, &tree_prior);
                t.bandwidth = tau_dist.sample(rng);
                t.basis = sample_basis(rng, &kernel);
                let vals: Vec<f64> =
                    (0..t.n_leaves()).map(|_| leaf_sd * rng.sample::<f64, _>(StandardNormal)).collect();
                t.set_leaf_values(&vals);
                t
            })
            .collect();
        Ok(Self { trees, gamma, sigma_mu, split_probs, dirichlet_conc, kernel, theta, link })
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_predictors(&self) -> usize {
        self.split_probs.len()
    }

    /// Leaf prior precision `λ_μ = M / σ_μ²`.
    pub fn lambda_mu(&self) -> f64 {
        self.n_trees() as f64 / (self.sigma_mu * self.sigma_mu)
    }

    /// `r(y, x) = γ + Σ_m B_m(y) g(x; T_m, M_m)`.
    pub fn eval_r(&self, y: f64, x: &[f64]) -> f64 {
        self.gamma + self.trees.iter().map(|t| t.basis.eval(y) * t.predict(x)).sum::<f64>()
    }

    /// `g(x; T_m, M_m)` for every tree.
    pub fn tree_outputs(&self, x: &[f64]) -> Vec<f64> {
        self.trees.iter().map(|t| t.predict(x)).collect()
    }

    /// `r(y, x)` from precomputed tree outputs at `x`.
    pub fn eval_r_from_outputs(&self, y: f64, g: &[f64]) -> f64 {
        self.gamma + self.trees.iter().zip(g).map(|(t, gm)| t.basis.eval(y) * gm).sum::<f64>()
    }

    pub fn mean_depth(&self) -> f64 {
        if self.trees.is_empty() {
            return 0.0;
        }
        self.trees.iter().map(|t| t.depth() as f64).sum::<f64>() / self.n_trees() as f64
    }

    /// Branch counts per predictor across all trees.
    pub fn split_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_predictors()];
        for t in &self.trees {
            for (a, b) in c.iter_mut().zip(t.split_counts(self.n_predictors())) {
                *a += b;
            }
        }
        c
    }
}

/// Explicit per-tree regression problem: residual, precision and the
/// `n_rows × L_k` design with rows `B_k(Y_row) φ_k(X_row)ᵀ`.
#[derive(Debug, Clone)]
pub struct BackfitWorkspace {
    pub residual: DVector<f64>,
    pub precision: DVector<f64>,
    pub design: DMatrix<f64>,
}

/// Build the explicit workspace for tree `k`.
pub fn backfit_residuals(state: &ForestState, aug: &AugmentedData, x: &Covariates, k: usize) -> BackfitWorkspace {
    let tree = &state.trees[k];
    let n_leaves = tree.n_leaves();
    let n = aug.n_rows();
    let mut design = DMatrix::<f64>::zeros(n, n_leaves);
    let mut residual = DVector::<f64>::zeros(n);
    for row in 0..n {
        let xi = x.row(aug.obs_of(row));
        let y = aug.y[row];
        let mut others = 0.0;
        for (m, t) in state.trees.iter().enumerate() {
            if m != k {
                others += t.basis.eval(y) * t.predict(xi);
            }
        }
        residual[row] = aug.z[row] - state.gamma - others;
        let b = tree.basis.eval(y);
        for (l, w) in tree.leaf_weights(xi).into_iter().enumerate() {
            design[(row, l)] = b * w;
        }
    }
    BackfitWorkspace { residual, precision: DVector::from_column_slice(&aug.lambda), design }
}

impl BackfitWorkspace {
    pub fn suff_stats(&self) -> SuffStats {
        let lb = DMatrix::from_fn(self.design.nrows(), self.design.ncols(), |r, c| {
            self.precision[r] * self.design[(r, c)]
        });
        let btlb = self.design.transpose() * &lb;
        let btlr = lb.transpose() * &self.residual;
        let rlr = self.residual.iter().zip(self.precision.iter()).map(|(r, l)| l * r * r).sum();
        let sum_ln_lambda = self.precision.iter().map(|l| l.ln()).sum();
        SuffStats { btlb, btlr, rlr, sum_ln_lambda, n_rows: self.residual.len() }
    }
}

/// Sufficient statistics of one tree's Gaussian regression.
#[derive(Debug, Clone)]
pub struct SuffStats {
    /// `BᵀΛB`
    pub btlb: DMatrix<f64>,
    /// `δ = BᵀΛR`
    pub btlr: DVector<f64>,
    /// `RᵀΛR`
    pub rlr: f64,
    /// `Σ ln λ_row`
    pub sum_ln_lambda: f64,
    pub n_rows: usize,
}

impl SuffStats {
    /// Cholesky factor of `A = BᵀΛB + λ_μ I`.
    fn factor(&self, lambda_mu: f64) -> Result<Cholesky<f64, Dyn>> {
        let l = self.btlb.nrows();
        let mut a = self.btlb.clone();
        for i in 0..l {
            a[(i, i)] += lambda_mu;
        }
        let scale = a.diagonal().iter().sum::<f64>() / l as f64;
        let mut jitter = 0.0;
        for _ in 0..4 {
            let mut aj = a.clone();
            for i in 0..l {
                aj[(i, i)] += jitter;
            }
            if let Some(c) = aj.cholesky() {
                return Ok(c);
            }
            jitter = if jitter == 0.0 { 1e-10 * scale } else { jitter * 100.0 };
        }
        Err(Error::NotPositiveDefinite("leaf posterior precision"))
    }

    /// Log marginal density of `R` with the leaves integrated out:
    /// `N(R; 0, Λ⁻¹ + B Bᵀ / λ_μ)` evaluated through `A`.
    pub fn marginal_loglik(&self, lambda_mu: f64) -> Result<f64> {
        let l = self.btlb.nrows() as f64;
        let chol = self.factor(lambda_mu)?;
        let ln_det_a = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let w = chol.l().solve_lower_triangular(&self.btlr).ok_or(Error::NotPositiveDefinite("leaf posterior precision"))?;
        let quad = self.rlr - w.dot(&w);
        Ok(-(self.n_rows as f64) * LN_SQRT_2PI + 0.5 * self.sum_ln_lambda
            - 0.5 * (ln_det_a - l * lambda_mu.ln())
            - 0.5 * quad)
    }

    /// Posterior mean `A⁻¹δ`.
    pub fn leaf_mean(&self, lambda_mu: f64) -> Result<DVector<f64>> {
        Ok(self.factor(lambda_mu)?.solve(&self.btlr))
    }

    /// Draw `μ ~ N(A⁻¹δ, A⁻¹)`.
    pub fn sample_leaves<R: Rng + ?Sized>(&self, rng: &mut R, lambda_mu: f64) -> Result<Vec<f64>> {
        let chol = self.factor(lambda_mu)?;
        let mean = chol.solve(&self.btlr);
        let e = DVector::<f64>::from_fn(mean.len(), |_, _| rng.sample(StandardNormal));
        let offset = chol
            .l()
            .transpose()
            .solve_upper_triangular(&e)
            .ok_or(Error::NotPositiveDefinite("leaf posterior precision"))?;
        Ok((mean + offset).as_slice().to_vec())
    }
}

pub fn marginal_loglik(ws: &BackfitWorkspace, lambda_mu: f64) -> Result<f64> {
    ws.suff_stats().marginal_loglik(lambda_mu)
}

pub fn sample_leaf_values<R: Rng + ?Sized>(rng: &mut R, ws: &BackfitWorkspace, lambda_mu: f64) -> Result<Vec<f64>> {
    ws.suff_stats().sample_leaves(rng, lambda_mu)
}

/// Per-tree outputs at every observation and basis values at every row,
/// plus the resulting `r` at every row.
#[derive(Debug, Clone)]
pub struct FitCache {
    g: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    fit: Vec<f64>,
}

impl FitCache {
    pub fn build(state: &ForestState, aug: &AugmentedData, x: &Covariates) -> Self {
        let n_obs = aug.n_obs();
        let g: Vec<Vec<f64>> =
            state.trees.iter().map(|t| (0..n_obs).map(|i| t.predict(x.row(i))).collect()).collect();
        let b: Vec<Vec<f64>> = state.trees.iter().map(|t| aug.y.iter().map(|&y| t.basis.eval(y)).collect()).collect();
        let mut fit = vec![state.gamma; aug.n_rows()];
        for (gm, bm) in g.iter().zip(&b) {
            for (row, f) in fit.iter_mut().enumerate() {
                *f += bm[row] * gm[aug.obs_of(row)];
            }
        }
        Self { g, b, fit }
    }

    /// `r(Y_row, X_row)` for every row.
    pub fn fit(&self) -> &[f64] {
        &self.fit
    }

    fn shift(&mut self, delta: f64) {
        for f in &mut self.fit {
            *f += delta;
        }
    }
}

/// Outcome of one tree's update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TreeUpdateInfo {
    pub move_kind: Option<MoveKind>,
    pub tree_accepted: bool,
    pub basis_accepted: bool,
    pub bandwidth_accepted: bool,
}

/// Leaf weights at every observation, flattened `n_obs × L`.
fn obs_weights(tree: &SoftTree, x: &Covariates, n_obs: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_obs * tree.n_leaves());
    for i in 0..n_obs {
        tree.leaf_weights_into(x.row(i), &mut out);
    }
    out
}

/// Per-observation `Σ_j λ B²` and `Σ_j λ B R` for a basis.
fn basis_sums(aug: &AugmentedData, resid: &[f64], basis: &BasisFunction) -> (Vec<f64>, Vec<f64>) {
    let n_obs = aug.n_obs();
    let mut s2 = vec![0.0; n_obs];
    let mut s1 = vec![0.0; n_obs];
    for i in 0..n_obs {
        for row in aug.rows_of(i) {
            let b = basis.eval(aug.y[row]);
            let lb = aug.lambda[row] * b;
            s2[i] += lb * b;
            s1[i] += lb * resid[row];
        }
    }
    (s2, s1)
}

struct RowConstants {
    rlr: f64,
    sum_ln_lambda: f64,
    n_rows: usize,
}

fn aggregate(phi: &[f64], n_leaves: usize, s2: &[f64], s1: &[f64], c: &RowConstants) -> SuffStats {
    let mut btlb = DMatrix::<f64>::zeros(n_leaves, n_leaves);
    let mut btlr = DVector::<f64>::zeros(n_leaves);
    for (i, w) in phi.chunks_exact(n_leaves).enumerate() {
        for a in 0..n_leaves {
            btlr[a] += w[a] * s1[i];
            let wa = w[a] * s2[i];
            for b in 0..=a {
                btlb[(a, b)] += wa * w[b];
            }
        }
    }
    for a in 0..n_leaves {
        for b in 0..a {
            btlb[(b, a)] = btlb[(a, b)];
        }
    }
    SuffStats { btlb, btlr, rlr: c.rlr, sum_ln_lambda: c.sum_ln_lambda, n_rows: c.n_rows }
}

/// One pass over tree `k`: topology MH, basis MH, bandwidth MH, then a
/// leaf redraw, each scored by the collapsed likelihood. Updates `cache`.
#[allow(clippy::too_many_arguments)]
pub fn update_tree_and_basis<R: Rng + ?Sized>(
    rng: &mut R,
    state: &mut ForestState,
    hp: &Hyperpriors,
    aug: &AugmentedData,
    x: &Covariates,
    cache: &mut FitCache,
    k: usize,
) -> Result<TreeUpdateInfo> {
    let n_obs = aug.n_obs();
    let lambda_mu = state.lambda_mu();
    let split_probs = state.split_probs.clone();
    let prior = TreePrior { alpha: hp.alpha, beta: hp.beta, max_depth: hp.max_depth, split_probs: &split_probs };
    let mut info = TreeUpdateInfo::default();

    let resid: Vec<f64> = (0..aug.n_rows())
        .map(|row| aug.z[row] - cache.fit[row] + cache.b[k][row] * cache.g[k][aug.obs_of(row)])
        .collect();
    let consts = RowConstants {
        rlr: resid.iter().zip(&aug.lambda).map(|(r, l)| l * r * r).sum(),
        sum_ln_lambda: aug.lambda.iter().map(|l| l.ln()).sum(),
        n_rows: aug.n_rows(),
    };

    let mut tree = state.trees[k].clone();
    let (mut s2, mut s1) = basis_sums(aug, &resid, &tree.basis);
    let mut phi = obs_weights(&tree, x, n_obs);
    let mut ll = aggregate(&phi, tree.n_leaves(), &s2, &s1, &consts).marginal_loglik(lambda_mu)?;

    // topology
    let proposal = propose_tree(rng, &tree, &prior, &hp.move_weights)?;
    info.move_kind = Some(proposal.kind);
    let phi_new = obs_weights(&proposal.tree, x, n_obs);
    let ll_new = aggregate(&phi_new, proposal.tree.n_leaves(), &s2, &s1, &consts).marginal_loglik(lambda_mu)?;
    let log_ratio = tree_log_prior(&proposal.tree, &prior)? - tree_log_prior(&tree, &prior)? + ll_new - ll
        + proposal.log_hastings_ratio;
    if rng.random::<f64>().ln() < log_ratio {
        tree = proposal.tree;
        phi = phi_new;
        ll = ll_new;
        info.tree_accepted = true;
    }

    // basis: independence proposal from the prior
    let basis_new = sample_basis(rng, &state.kernel);
    let (s2_new, s1_new) = basis_sums(aug, &resid, &basis_new);
    let ll_new = aggregate(&phi, tree.n_leaves(), &s2_new, &s1_new, &consts).marginal_loglik(lambda_mu)?;
    if rng.random::<f64>().ln() < ll_new - ll {
        tree.basis = basis_new;
        s2 = s2_new;
        s1 = s1_new;
        ll = ll_new;
        info.basis_accepted = true;
    }

    // bandwidth: log-normal random walk against an exponential prior
    if tree.n_branches() > 0 {
        let tau = tree.bandwidth;
        let tau_new = tau * (hp.tau_step * rng.sample::<f64, _>(StandardNormal)).exp();
        let mut cand = tree.clone();
        cand.bandwidth = tau_new;
        let phi_new = obs_weights(&cand, x, n_obs);
        let ll_new = aggregate(&phi_new, cand.n_leaves(), &s2, &s1, &consts).marginal_loglik(lambda_mu)?;
        let log_ratio = ll_new - ll - (tau_new - tau) / hp.tau_mean + (tau_new / tau).ln();
        if rng.random::<f64>().ln() < log_ratio {
            tree = cand;
            phi = phi_new;
            info.bandwidth_accepted = true;
        }
    } else {
        // likelihood does not depend on τ: draw it from the prior
        tree.bandwidth = Exp::new(1.0 / hp.tau_mean).expect("valid").sample(rng);
    }

    let stats = aggregate(&phi, tree.n_leaves(), &s2, &s1, &consts);
    let leaves = stats.sample_leaves(rng, lambda_mu)?;
    tree.set_leaf_values(&leaves);

    // refresh caches
    let n_leaves = tree.n_leaves();
    let g_new: Vec<f64> =
        phi.chunks_exact(n_leaves).map(|w| w.iter().zip(&leaves).map(|(a, b)| a * b).sum()).collect();
    let b_new: Vec<f64> = aug.y.iter().map(|&y| tree.basis.eval(y)).collect();
    for row in 0..aug.n_rows() {
        let i = aug.obs_of(row);
        cache.fit[row] += b_new[row] * g_new[i] - cache.b[k][row] * cache.g[k][i];
    }
    cache.g[k] = g_new;
    cache.b[k] = b_new;
    state.trees[k] = tree;
    Ok(info)
}

/// Conjugate normal draw of `γ`.
pub fn update_gamma<R: Rng + ?Sized>(
    rng: &mut R,
    state: &mut ForestState,
    hp: &Hyperpriors,
    aug: &AugmentedData,
    cache: &mut FitCache,
) {
    let prior_prec = 1.0 / (hp.gamma_sd * hp.gamma_sd);
    let mut prec = prior_prec;
    let mut weighted = prior_prec * hp.gamma_mean;
    for row in 0..aug.n_rows() {
        let l = aug.lambda[row];
        prec += l;
        weighted += l * (aug.z[row] - (cache.fit[row] - state.gamma));
    }
    let g = weighted / prec + rng.sample::<f64, _>(StandardNormal) / prec.sqrt();
    cache.shift(g - state.gamma);
    state.gamma = g;
}

/// Log full conditional of `σ_μ` given all leaf values.
pub fn sigma_mu_log_posterior(sigma: f64, scale: f64, n_trees: usize, n_leaves: usize, sum_sq: f64) -> f64 {
    if !(sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    let m = n_trees as f64;
    -(1.0 + (sigma / scale).powi(2)).ln() - n_leaves as f64 * sigma.ln() - 0.5 * m * sum_sq / (sigma * sigma)
}

/// Slice-sampling update of `σ_μ`.
pub fn update_sigma_mu<R: Rng + ?Sized>(rng: &mut R, state: &mut ForestState, hp: &Hyperpriors) {
    let mut n_leaves = 0;
    let mut sum_sq = 0.0;
    for t in &state.trees {
        for v in t.leaf_values() {
            n_leaves += 1;
            sum_sq += v * v;
        }
    }
    let m = state.n_trees();
    let scale = hp.sigma_mu_scale;
    let upper = hp.sigma_mu_upper.unwrap_or(f64::INFINITY);
    state.sigma_mu = slice_sample(
        rng,
        state.sigma_mu,
        |s| if s < upper { sigma_mu_log_posterior(s, scale, m, n_leaves, sum_sq) } else { f64::NEG_INFINITY },
        hp.slice_width,
        hp.slice_max_steps,
    );
}

/// Log of `p(counts | a)` with `s ~ Dir(a/P, ...)` integrated out.
pub fn dirichlet_count_loglik(a: f64, counts: &[usize]) -> f64 {
    let p = counts.len() as f64;
    let total: usize = counts.iter().sum();
    let each = a / p;
    ln_gamma(a) - ln_gamma(a + total as f64)
        + counts.iter().map(|&c| ln_gamma(each + c as f64) - ln_gamma(each)).sum::<f64>()
}

/// Log density of `η = logit(a / (a + P))` under the Beta prior on
/// `a / (a + P)`, up to a constant, plus the collapsed count likelihood.
pub fn conc_log_target(eta: f64, p: usize, counts: &[usize], shape1: f64, shape2: f64) -> f64 {
    let ln_u = crate::special::log_sigmoid(eta);
    let ln_1mu = crate::special::log_sigmoid(-eta);
    let a = p as f64 * (ln_u - ln_1mu).exp();
    if !(a > 0.0 && a.is_finite()) {
        return f64::NEG_INFINITY;
    }
    // Beta density in u times the Jacobian du/dη = u(1 - u)
    dirichlet_count_loglik(a, counts) + shape1 * ln_u + shape2 * ln_1mu
}

/// Collapsed MH update of `a`, then a conjugate draw of `s`.
pub fn update_split_probs<R: Rng + ?Sized>(rng: &mut R, state: &mut ForestState, hp: &Hyperpriors) {
    let p = state.n_predictors();
    let counts = state.split_counts();
    let pf = p as f64;
    let a = state.dirichlet_conc;
    let eta = (a / pf).ln();
    let eta_new = eta + hp.a_step * rng.sample::<f64, _>(StandardNormal);
    let cur = conc_log_target(eta, p, &counts, hp.a_beta_shape1, hp.a_beta_shape2);
    let new = conc_log_target(eta_new, p, &counts, hp.a_beta_shape1, hp.a_beta_shape2);
    if rng.random::<f64>().ln() < new - cur {
        state.dirichlet_conc = pf * eta_new.exp();
    }
    let each = state.dirichlet_conc / pf;
    let logs: Vec<f64> = counts.iter().map(|&c| ln_gamma_variate(rng, each + c as f64)).collect();
    state.split_probs = normalize_log_weights(&logs);
}

/// Update the kernel length scale given the tree frequencies.
pub fn update_kernel_scale<R: Rng + ?Sized>(rng: &mut R, state: &mut ForestState, hp: &Hyperpriors) {
    let m = state.n_trees() as f64;
    match state.kernel.family {
        KernelFamily::SquaredExponential => {
            let ss: f64 = state.trees.iter().map(|t| t.basis.omega * t.basis.omega).sum();
            let shape = hp.rho2_shape + 0.5 * m;
            let rate = hp.rho2_rate + 0.5 * ss;
            let rho2: f64 = Gamma::new(shape, 1.0 / rate).expect("valid").sample(rng);
            state.kernel.length_scale = rho2.sqrt();
        }
        _ => {
            let target = |ln_rho2: f64, kernel: &Kernel| {
                let k = Kernel::new(kernel.family, (0.5 * ln_rho2).exp());
                state.trees.iter().map(|t| k.spectral_log_density(t.basis.omega)).sum::<f64>()
                    + hp.rho2_shape * ln_rho2
                    - hp.rho2_rate * ln_rho2.exp()
            };
            let cur = 2.0 * state.kernel.length_scale.ln();
            let new = cur + hp.rho_step * rng.sample::<f64, _>(StandardNormal);
            if rng.random::<f64>().ln() < target(new, &state.kernel) - target(cur, &state.kernel) {
                state.kernel.length_scale = (0.5 * new).exp();
            }
        }
    }
}

/// Refresh `γ`, `σ_μ`, `(a, s)` and `ρ`, in that order.
pub fn update_hyperparameters<R: Rng + ?Sized>(
    rng: &mut R,
    state: &mut ForestState,
    hp: &Hyperpriors,
    aug: &AugmentedData,
    cache: &mut FitCache,
) {
    update_gamma(rng, state, hp, aug, cache);
    update_sigma_mu(rng, state, hp);
    update_split_probs(rng, state, hp);
    update_kernel_scale(rng, state, hp);
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn rng(seed: u64) -> crate::ChainRng {
        crate::ChainRng::seed_from_u64(seed)
    }

    fn ws(design: Vec<f64>, n: usize, l: usize, precision: Vec<f64>, residual: Vec<f64>) -> BackfitWorkspace {
        BackfitWorkspace {
            residual: DVector::from_vec(residual),
            precision: DVector::from_vec(precision),
            design: DMatrix::from_row_slice(n, l, &design),
        }
    }

    #[test]
    fn two_by_two_closed_form() {
        let w = ws(vec![1.0, 0.0], 2, 1, vec![1.0, 1.0], vec![0.0, 0.0]);
        let got = marginal_loglik(&w, 1.0).unwrap();
        assert_abs_diff_eq!(got, -(2.0 * PI).ln() - 0.5 * 2f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn infinite_leaf_precision_reduces_to_independent_rows() {
        let w = ws(vec![0.3, 1.0, -0.4, 0.2, 0.8, 0.1], 3, 2, vec![0.5, 2.0, 1.5], vec![0.7, -1.1, 0.4]);
        let direct: f64 = (0..3)
            .map(|i| {
                let l = w.precision[i];
                0.5 * l.ln() - LN_SQRT_2PI - 0.5 * l * w.residual[i].powi(2)
            })
            .sum();
        assert_abs_diff_eq!(marginal_loglik(&w, 1e12).unwrap(), direct, epsilon = 1e-8);
    }

    #[test]
    fn single_leaf_posterior_mean_is_ridge() {
        let w = ws(vec![1.0, 2.0, -1.0], 3, 1, vec![1.0; 3], vec![0.5, 1.0, 0.2]);
        let mean = w.suff_stats().leaf_mean(2.0).unwrap();
        let br = 0.5 + 2.0 - 0.2;
        let bb = 1.0 + 4.0 + 1.0;
        assert_abs_diff_eq!(mean[0], br / (bb + 2.0), epsilon = 1e-14);
    }

    #[test]
    fn zero_design_draws_from_prior() {
        let w = ws(vec![0.0; 6], 3, 2, vec![1.0; 3], vec![1.0, 2.0, 3.0]);
        let stats = w.suff_stats();
        let mut r = rng(1);
        let n = 100_000;
        let lam = 4.0;
        let mut ss = 0.0;
        for _ in 0..n {
            let v = stats.sample_leaves(&mut r, lam).unwrap();
            ss += v[0] * v[0];
        }
        assert!((ss / n as f64 * lam - 1.0).abs() < 0.02);
    }

    #[test]
    fn gamma_conjugate_arithmetic() {
        // one row, Z = 2, λ = 1, nothing else in the fit: N(1.5, 0.5)
        let hp = Hyperpriors::default();
        let mut state = ForestState::initial(&mut rng(2), &hp, 0, KernelFamily::SquaredExponential, Link::Probit, BaseModelParams::standard(1));
        let mut aug = AugmentedData::observed_only(&[0.0]);
        aug.z[0] = 2.0;
        let x = Covariates::new(1, 1, vec![0.5]);
        let mut r = rng(3);
        let n = 200_000;
        let mut draws = Vec::with_capacity(n);
        for _ in 0..n {
            let mut cache = FitCache::build(&state, &aug, &x);
            update_gamma(&mut r, &mut state, &hp, &aug, &mut cache);
            draws.push(state.gamma);
        }
        assert!((crate::stats::mean(&draws) - 1.5).abs() < 0.01);
        assert!((crate::stats::variance(&draws) - 0.5).abs() < 0.01);
    }

    #[test]
    fn rho_conjugate_with_zero_frequencies() {
        let hp = Hyperpriors::default();
        let mut state = ForestState::initial(&mut rng(4), &hp, 50, KernelFamily::SquaredExponential, Link::Probit, BaseModelParams::standard(1));
        for t in &mut state.trees {
            t.basis = BasisFunction::new(0.0, 0.3);
        }
        let mut r = rng(5);
        let n = 50_000;
        let mut acc = 0.0;
        for _ in 0..n {
            update_kernel_scale(&mut r, &mut state, &hp);
            acc += state.kernel.length_scale.powi(2);
        }
        let expect = 26.0 / (PI * PI / 4.0);
        assert!((acc / n as f64 / expect - 1.0).abs() < 0.01);
    }

    #[test]
    fn many_splits_on_one_coordinate_concentrate_s() {
        let hp = Hyperpriors::default();
        let mut state = ForestState::initial(&mut rng(6), &hp, 20, KernelFamily::SquaredExponential, Link::Probit, BaseModelParams::standard(5));
        for t in &mut state.trees {
            for _ in 0..10 {
                let leaf = t.leaves()[0];
                let (lo, hi) = t.interval(leaf, 0);
                t.grow(leaf, 0, 0.5 * (lo + hi));
            }
        }
        let mut r = rng(7);
        let mut s1 = 0.0;
        for _ in 0..2000 {
            update_split_probs(&mut r, &mut state, &hp);
            s1 += state.split_probs[0];
        }
        assert!(s1 / 2000.0 > 0.97);
    }

    #[test]
    fn zero_leaves_make_r_constant() {
        let hp = Hyperpriors::default();
        let state = ForestState::initial(&mut rng(8), &hp, 5, KernelFamily::SquaredExponential, Link::Logit, BaseModelParams::standard(2));
        for &y in &[-3.0, 0.0, 2.5] {
            assert_eq!(state.eval_r(y, &[0.2, 0.9]), hp.gamma_mean);
        }
    }

    #[test]
    fn constant_feature_single_leaf() {
        let hp = Hyperpriors::default();
        let mut state = ForestState::initial(&mut rng(9), &hp, 1, KernelFamily::SquaredExponential, Link::Probit, BaseModelParams::standard(1));
        state.trees[0].basis = BasisFunction::constant();
        state.trees[0].set_leaf_values(&[0.7]);
        assert_abs_diff_eq!(state.eval_r(4.0, &[0.1]), hp.gamma_mean + 2f64.sqrt() * 0.7, epsilon = 1e-15);
    }
}
