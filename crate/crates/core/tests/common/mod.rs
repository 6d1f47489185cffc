//! Checks shared by the integration tests and the acceptance report. Each
//! check returns the measured value next to its threshold.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt, SeedableRng};
use rand_distr::{Distribution, StandardNormal, StudentT};

use sbartds::augmentation::{rejection_augment_with, sample_lambda};
use sbartds::backfitting::{BackfitWorkspace, ForestState, Hyperpriors};
use sbartds::base_model::{update_theta, BaseModelParams, ThetaPrior};
use sbartds::data::{Covariates, Dataset};
use sbartds::density::{integrate_uniform, simpson_weights, tv_distance, uniform_grid};
use sbartds::fourier_basis::{kernel_cov, sample_basis, Kernel, KernelFamily};
use sbartds::links::{HazardBound, Link};
use sbartds::pipeline::evaluate_draws;
use sbartds::sampler::{run_chain, simulate_responses, sweep, ChainOutput, ChainSettings, Draw};
use sbartds::simulation::{gen_mixture, mixture_true_cdf, mixture_true_density, MixtureDesign};
use sbartds::special::{LN_SQRT_2PI, sigmoid, student_t_cdf};
use sbartds::stats::{batch_means_se, ks_statistic, mean, variance};
use sbartds::ChainRng;

pub fn rng(seed: u64) -> ChainRng {
    ChainRng::seed_from_u64(seed)
}

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn below(name: impl Into<String>, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self { name: name.into(), value, threshold, pass: value < threshold, detail: detail.into() }
    }

    fn at_most(name: impl Into<String>, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self { name: name.into(), value, threshold, pass: value <= threshold, detail: detail.into() }
    }

    fn at_least(name: impl Into<String>, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self { name: name.into(), value, threshold, pass: value >= threshold, detail: detail.into() }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: value {:.6e}, threshold {:.6e}; {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.threshold,
            self.detail
        )
    }
}

// ---------------------------------------------------------------- Woodbury

/// Dense log density of `N(r; 0, Λ⁻¹ + B Bᵀ / λ_μ)`, computed in
/// double-double arithmetic. In plain f64 merely forming `Σ` with `λ`
/// spread over six decades perturbs the result by ~1e-7.
pub fn dense_loglik(ws: &BackfitWorkspace, lambda_mu: f64) -> f64 {
    type T = twofloat::TwoFloat;
    // the crate's division is only f64-accurate; long division with two
    // correction terms restores double-double precision
    let div = |a: T, b: T| -> T {
        let q1 = a.hi() / b.hi();
        let r1 = a - T::from(q1) * b;
        let q2 = r1.hi() / b.hi();
        let r2 = r1 - T::from(q2) * b;
        T::from(q1) + T::from(q2) + T::from(r2.hi() / b.hi())
    };
    let n = ws.residual.len();
    let l = ws.design.ncols();
    let lm = T::from(lambda_mu);
    let mut chol = vec![vec![T::from(0.0); n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = T::from(0.0);
            for c in 0..l {
                s += T::from(ws.design[(i, c)]) * T::from(ws.design[(j, c)]);
            }
            s = div(s, lm);
            if i == j {
                s += div(T::from(1.0), T::from(ws.precision[i]));
            }
            for c in 0..j {
                s -= chol[i][c] * chol[j][c];
            }
            chol[i][j] = if i == j { s.sqrt() } else { div(s, chol[j][j]) };
        }
    }
    let mut ln_det = T::from(0.0);
    let mut quad = T::from(0.0);
    let mut w = vec![T::from(0.0); n];
    for i in 0..n {
        let mut s = T::from(ws.residual[i]);
        for c in 0..i {
            s -= chol[i][c] * w[c];
        }
        w[i] = div(s, chol[i][i]);
        quad += w[i] * w[i];
        // f64 log of the head plus the first-order tail correction
        let d = chol[i][i];
        ln_det += T::from(2.0 * d.hi().ln()) + T::from(2.0 * (d.lo() / d.hi()).ln_1p());
    }
    let total = T::from(-(n as f64)) * T::from(LN_SQRT_2PI) - T::from(0.5) * ln_det - T::from(0.5) * quad;
    total.hi() + total.lo()
}

pub fn random_workspace<R: Rng + ?Sized>(rng: &mut R) -> (BackfitWorkspace, f64) {
    let n = rng.random_range(1..=50usize);
    let l = rng.random_range(1..=8usize);
    // leaf weights of a soft tree times a basis value
    let design = DMatrix::from_fn(n, l, |_, _| {
        let w: f64 = rng.random();
        let b = 2f64.sqrt() * (rng.random::<f64>() * std::f64::consts::TAU).cos();
        w * b
    });
    let precision = DVector::from_fn(n, |_, _| 10f64.powf(rng.random_range(-3.0..3.0)));
    let residual = DVector::from_fn(n, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal));
    let lambda_mu = 10f64.powf(rng.random_range(-2.0..3.0));
    (BackfitWorkspace { residual, precision, design }, lambda_mu)
}

pub fn woodbury(instances: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let (ws, lm) = random_workspace(&mut r);
        let fast = sbartds::backfitting::marginal_loglik(&ws, lm).expect("posterior precision factorizes");
        worst = worst.max((fast - dense_loglik(&ws, lm)).abs());
    }
    Check::at_most(
        "1 collapsed likelihood matches dense Gaussian",
        worst,
        1e-8,
        format!("max abs difference over {instances} instances"),
    )
}

// --------------------------------------------------------------------- RFF

pub fn rff_family(family: KernelFamily, n_bases: usize, seed: u64) -> Check {
    let kernel = Kernel::new(family, 0.7);
    let mut r = rng(seed);
    let grid = uniform_grid(-1.5, 1.5, 20);
    let mut acc = vec![0.0; grid.len() * grid.len()];
    let mut vals = vec![0.0; grid.len()];
    for _ in 0..n_bases {
        let b = sample_basis(&mut r, &kernel);
        for (v, &y) in vals.iter_mut().zip(&grid) {
            *v = b.eval(y);
        }
        for i in 0..grid.len() {
            for j in 0..grid.len() {
                acc[i * grid.len() + j] += vals[i] * vals[j];
            }
        }
    }
    let mut worst = 0.0f64;
    for i in 0..grid.len() {
        for j in 0..grid.len() {
            let mc = acc[i * grid.len() + j] / n_bases as f64;
            worst = worst.max((mc - kernel_cov(&kernel, grid[i], grid[j])).abs());
        }
    }
    let name = match family {
        KernelFamily::SquaredExponential => "squared exponential".to_string(),
        KernelFamily::Matern { nu } => format!("matern nu={nu}"),
        KernelFamily::Cauchy => "cauchy".to_string(),
    };
    Check::below(
        format!("2 random features reproduce {name} kernel"),
        worst,
        0.02,
        format!("sup-norm over 20x20 grid, {n_bases} bases"),
    )
}

/// Kernel correlation by quadrature of the spectral density, independent
/// of the closed forms, with the spectral mass left outside the truncated
/// frequency range (a bound on the truncation error).
pub fn spectral_quadrature(kernel: &Kernel, d: f64) -> (f64, f64) {
    let n = 400_001;
    let w_max = 400.0 / kernel.length_scale;
    let grid = uniform_grid(-w_max, w_max, n);
    let dens: Vec<f64> = grid.iter().map(|&w| kernel.spectral_log_density(w).exp()).collect();
    let vals: Vec<f64> = dens.iter().zip(&grid).map(|(p, &w)| p * (w * d).cos()).collect();
    (integrate_uniform(&vals, &grid), 1.0 - integrate_uniform(&dens, &grid))
}

// ------------------------------------------------------------ augmentation

pub fn geometric_rejections(trials: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let theta = BaseModelParams::standard(1);
    let total: usize = (0..trials)
        .map(|_| rejection_augment_with(&mut r, &theta, &[0.5], 0, 1_000_000, |_| 0.5).unwrap().len())
        .sum();
    let m = total as f64 / trials as f64;
    Check::at_most(
        "3a rejected count is geometric under constant acceptance",
        (m - 1.0).abs(),
        0.01,
        format!("mean {m:.5} over {trials} trials, expected 1"),
    )
}

/// `z ~ F`, `λ | z`, `z' ~ N(0, 1/λ)`: `z'` must follow `F` again.
fn mixture_roundtrip<R: Rng + ?Sized>(r: &mut R, link: &Link, draw: impl Fn(&mut R) -> f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z = draw(r);
            let lambda = sample_lambda(r, link, z, 0.0);
            r.sample::<f64, _>(StandardNormal) / lambda.sqrt()
        })
        .collect()
}

pub fn logistic_mixture(n: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let draws = mixture_roundtrip(
        &mut r,
        &Link::Logit,
        |r| {
            let u: f64 = r.random();
            (u / (1.0 - u)).ln()
        },
        n,
    );
    let ks = ks_statistic(&draws, sigmoid);
    Check::below("3b logistic scale mixture", ks, 0.005, format!("KS over {n} draws"))
}

pub fn t_mixture(n: usize, nu: f64, seed: u64) -> Check {
    let mut r = rng(seed);
    let t = StudentT::new(nu).unwrap();
    let draws = mixture_roundtrip(&mut r, &Link::StudentT { nu }, |r| t.sample(r), n);
    let ks = ks_statistic(&draws, |z| student_t_cdf(z, nu));
    Check::below(format!("3c t({nu}) scale mixture"), ks, 0.005, format!("KS over {n} draws"))
}

// ------------------------------------------------------------------ Geweke

pub fn geweke_hyperpriors(p: usize) -> Hyperpriors {
    Hyperpriors {
        theta_prior: ThetaPrior::Conjugate { mean: vec![0.0; p + 1], scale: 1.0, shape: 3.0, rate: 2.0 },
        // keeps prior draws away from vanishing acceptance
        sigma_mu_upper: Some(GEWEKE_SIGMA_MU_UPPER),
        ..Hyperpriors::default()
    }
}

pub const GEWEKE_SIGMA_MU_UPPER: f64 = 3.0;

pub const GEWEKE_NAMES: [&str; 4] = ["gamma", "sigma_mu", "mean depth", "sum J"];

fn functionals(state: &ForestState, total_rejected: usize) -> [f64; 4] {
    [state.gamma, state.sigma_mu, state.mean_depth(), total_rejected as f64]
}

/// Joint-distribution test: prior draws with data simulated from them,
/// against a chain alternating a sweep with regenerated data.
pub fn geweke(n_obs: usize, p: usize, n_trees: usize, sweeps: usize, seed: u64) -> Vec<Check> {
    let hp = geweke_hyperpriors(p);
    let link = Link::Logit;
    let family = KernelFamily::SquaredExponential;
    let cap = 1_000_000;
    let mut r = rng(seed);
    let x = Covariates::new(n_obs, p, (0..n_obs * p).map(|_| r.random::<f64>()).collect());

    let mut marginal = vec![Vec::with_capacity(sweeps); 4];
    for _ in 0..sweeps {
        let state = ForestState::sample_prior(&mut r, &hp, n_trees, family, link, p).unwrap();
        let aug = simulate_responses(&mut r, &state, &x, cap).unwrap();
        for (k, v) in functionals(&state, aug.total_rejected()).into_iter().enumerate() {
            marginal[k].push(v);
        }
    }

    let mut successive = vec![Vec::with_capacity(sweeps); 4];
    let mut state = ForestState::sample_prior(&mut r, &hp, n_trees, family, link, p).unwrap();
    let mut y = simulate_responses(&mut r, &state, &x, cap).unwrap().y_of_all();
    for _ in 0..sweeps {
        let info = sweep(&mut r, &mut state, &hp, &x, &y, cap).unwrap();
        for (k, v) in functionals(&state, info.total_rejected).into_iter().enumerate() {
            successive[k].push(v);
        }
        y = simulate_responses(&mut r, &state, &x, cap).unwrap().y_of_all();
    }

    (0..4)
        .map(|k| {
            let m1 = mean(&marginal[k]);
            let se1 = (variance(&marginal[k]) / sweeps as f64).sqrt();
            let m2 = mean(&successive[k]);
            let se2 = batch_means_se(&successive[k], 50);
            let se = (se1 * se1 + se2 * se2).sqrt();
            let zscore = (m1 - m2).abs() / se;
            Check::below(
                format!("4 Geweke {}", GEWEKE_NAMES[k]),
                zscore,
                3.0,
                format!("prior-path mean {m1:.5}, successive mean {m2:.5}, |diff|/se over {sweeps} sweeps"),
            )
        })
        .collect()
}

/// Observed responses in observation order.
pub trait ObservedResponses {
    fn y_of_all(&self) -> Vec<f64>;
}

impl ObservedResponses for sbartds::augmentation::AugmentedData {
    fn y_of_all(&self) -> Vec<f64> {
        (0..self.n_obs())
            .map(|i| {
                let rows = self.rows_of(i);
                let accepted = rows.clone().find(|&row| self.is_accepted(row)).expect("one accepted row");
                self.y[accepted]
            })
            .collect()
    }
}

// -------------------------------------------------------- simulation study

pub struct MixtureFit {
    pub data: Dataset,
    pub chain: ChainOutput,
}

pub fn default_settings(iterations: usize, burn_in: usize) -> ChainSettings {
    ChainSettings {
        iterations,
        burn_in,
        thin: 1,
        rejection_cap: 10_000,
        n_trees: 50,
        link: Link::Probit,
        kernel: KernelFamily::SquaredExponential,
    }
}

pub fn try_fit_mixture(
    n: usize,
    p: usize,
    seed: u64,
    iterations: usize,
    burn_in: usize,
) -> sbartds::Result<MixtureFit> {
    let mut r = rng(seed);
    let sim = gen_mixture(&mut r, &MixtureDesign { n, p });
    let data = Dataset::from_raw(&sim.predictor_names(), &sim.x, &sim.y)?;
    let chain = run_chain(&data.x, &data.y, &Hyperpriors::default(), &default_settings(iterations, burn_in), seed, 0)?;
    Ok(MixtureFit { data, chain })
}

pub fn fit_mixture(n: usize, p: usize, seed: u64, iterations: usize, burn_in: usize) -> MixtureFit {
    try_fit_mixture(n, p, seed, iterations, burn_in).expect("chain runs")
}

/// Raw-scale grid covering the central `1 - 2 tail` mass of the true
/// conditional law at `x1`.
fn true_support_grid(x1: f64, tail: f64, n: usize) -> Vec<f64> {
    let invert = |target: f64| {
        let (mut lo, mut hi) = (-5.0, 6.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mixture_true_cdf(x1, mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    uniform_grid(invert(tail), invert(1.0 - tail), n)
}

pub const COVERAGE_X1: [f64; 6] = [0.14, 0.28, 0.42, 0.58, 0.72, 0.86];

fn query(x1: f64, p: usize) -> Vec<f64> {
    let mut q = vec![0.5; p];
    q[0] = x1;
    q
}

/// Criterion 5: normalization, TV improvement over the base model and band
/// coverage.
pub fn simulation_study(fit: &MixtureFit, seed: u64) -> Vec<Check> {
    let data = &fit.data;
    let t = &data.transform;
    let p = data.n_predictors();
    let draws: Vec<&Draw> = fit.chain.draws.iter().collect();
    let mut checks = Vec::new();

    // (a) normalization on a wide raw grid, independent of the sampler's
    // internal quadrature
    let wide_raw = uniform_grid(-3.0, 4.0, 2801);
    let wide_std: Vec<f64> = wide_raw.iter().map(|&y| t.y_to_std(y)).collect();
    let queries: Vec<Vec<f64>> = COVERAGE_X1.iter().map(|&x1| query(x1, p)).collect();
    let ev = evaluate_draws(data, &draws, &wide_std, &queries, 0.95).unwrap();
    let mut worst = 0.0f64;
    for d in &ev.densities {
        for f in d {
            worst = worst.max((integrate_uniform(f, &wide_raw) - 1.0).abs());
        }
    }
    checks.push(Check::at_most(
        "5a every density integrates to one",
        worst,
        1e-6,
        format!("max |integral - 1| over {} draws x {} queries", ev.densities.len(), queries.len()),
    ));

    // (b) TV against the base-model-only posterior, both on the same test set
    let mut r = rng(seed ^ 0x7e57);
    let x_test: Vec<Vec<f64>> = (0..40).map(|_| (0..p).map(|_| r.random::<f64>()).collect()).collect();
    let tv_grid_raw = uniform_grid(-2.0, 3.0, 1001);
    let tv_grid_std: Vec<f64> = tv_grid_raw.iter().map(|&y| t.y_to_std(y)).collect();
    let thinned: Vec<&Draw> = draws.iter().step_by(10).copied().collect();
    let ev_tv = evaluate_draws(data, &thinned, &tv_grid_std, &x_test, 0.95).unwrap();
    let fhat = ev_tv.summary.mean.clone();
    let f0 = |x: &[f64], y: f64| mixture_true_density(x[0], y);
    let tv_model = tv_distance(f0, &fhat, &x_test, &tv_grid_raw);

    let base_draws = base_only_posterior(data, 1000, seed);
    let fbase: Vec<Vec<f64>> = x_test
        .iter()
        .map(|x| {
            let u = t.x_to_unit(x);
            tv_grid_raw
                .iter()
                .map(|&y| {
                    let ys = t.y_to_std(y);
                    base_draws.iter().map(|th| sbartds::base_model::base_density(th, &u, ys)).sum::<f64>()
                        / base_draws.len() as f64
                        / t.y_sd
                })
                .collect()
        })
        .collect();
    let tv_base = tv_distance(f0, &fbase, &x_test, &tv_grid_raw);
    checks.push(Check::at_most(
        "5b TV improves on the base model by at least 25%",
        tv_model / tv_base,
        0.75,
        format!("TV model {tv_model:.4}, TV base {tv_base:.4}, ratio shown; 40 test points"),
    ));

    // (c) coverage of the pointwise 95% bands on the true law's central
    // 99.9% range
    let mut covered = 0usize;
    let mut total = 0usize;
    let mut per_x = Vec::new();
    for &x1 in &COVERAGE_X1 {
        let grid_raw = true_support_grid(x1, 5e-4, 200);
        let grid_std: Vec<f64> = grid_raw.iter().map(|&y| t.y_to_std(y)).collect();
        let ev_c = evaluate_draws(data, &draws, &grid_std, &[query(x1, p)], 0.95).unwrap();
        let mut c = 0usize;
        for (g, &y) in grid_raw.iter().enumerate() {
            let truth = mixture_true_density(x1, y);
            if ev_c.summary.lower[0][g] <= truth && truth <= ev_c.summary.upper[0][g] {
                c += 1;
            }
        }
        per_x.push(format!("{x1}:{:.2}", c as f64 / grid_raw.len() as f64));
        covered += c;
        total += grid_raw.len();
    }
    checks.push(Check::at_least(
        "5c 95% bands cover the true density",
        covered as f64 / total as f64,
        0.85,
        format!("pooled fraction of grid points; per x1 {}", per_x.join(" ")),
    ));
    checks
}

/// Flat-prior posterior of the Gaussian linear model on the observed data.
pub fn base_only_posterior(data: &Dataset, n_draws: usize, seed: u64) -> Vec<BaseModelParams> {
    let mut r = rng(seed ^ 0xba5e);
    let aug = sbartds::augmentation::AugmentedData::observed_only(&data.y);
    (0..n_draws).map(|_| update_theta(&mut r, &ThetaPrior::Flat, &data.x, &aug).unwrap()).collect()
}

/// Criterion 6 for one seed: posterior mean splitting proportion of the
/// active predictor over the largest noise coordinate.
pub fn selection_ratio(fit: &MixtureFit) -> (f64, f64) {
    let p = fit.data.n_predictors();
    let n = fit.chain.draws.len() as f64;
    let mut s = vec![0.0; p];
    for d in &fit.chain.draws {
        for (acc, v) in s.iter_mut().zip(&d.state.split_probs) {
            *acc += v / n;
        }
    }
    let noise = s[1..].iter().copied().fold(0.0, f64::max);
    (s[0], noise)
}

// ------------------------------------------------------------ cancellation

pub fn cancellation(seed: u64) -> Check {
    let mut r = rng(seed);
    let p = 3;
    let hp = geweke_hyperpriors(p);
    let mut worst = 0.0f64;
    for link in [Link::Probit, Link::Logit, Link::StudentT { nu: 4.0 }] {
        let mut state = ForestState::sample_prior(&mut r, &hp, 20, KernelFamily::SquaredExponential, link, p).unwrap();
        for t in &mut state.trees {
            let zeros = vec![0.0; t.n_leaves()];
            t.set_leaf_values(&zeros);
        }
        for _ in 0..5 {
            let x: Vec<f64> = (0..p).map(|_| r.random()).collect();
            let m = state.theta.mean(&x);
            let s = state.theta.sigma;
            let grid = uniform_grid(m - 4.0 * s, m + 4.0 * s, 257);
            let f = sbartds::density::conditional_density(&state, &x, &grid).unwrap();
            for (v, &y) in f.iter().zip(&grid) {
                worst = worst.max((v - sbartds::base_model::base_density(&state.theta, &x, y)).abs());
            }
        }
    }
    Check::at_most("7 zero leaves give the base density", worst, 1e-10, "max abs difference, three links")
}

// --------------------------------------------------------- Hellinger bound

/// Random piecewise-smooth function on `[0,1]²`: a step in `x` plus
/// cosine terms in `y` whose amplitudes drift with `x`.
struct RandomSurface {
    jump_at: f64,
    jump: f64,
    terms: Vec<(f64, f64, f64, f64)>,
}

impl RandomSurface {
    fn draw<R: Rng + ?Sized>(r: &mut R, scale: f64) -> Self {
        let terms = (0..4)
            .map(|_| {
                (
                    scale * r.sample::<f64, _>(StandardNormal),
                    r.random_range(0.0..12.0),
                    r.random_range(0.0..std::f64::consts::TAU),
                    r.random_range(-1.0..1.0),
                )
            })
            .collect();
        Self { jump_at: r.random(), jump: scale * r.sample::<f64, _>(StandardNormal), terms }
    }

    fn eval(&self, x: f64, y: f64) -> f64 {
        let step = if x < self.jump_at { self.jump } else { 0.0 };
        step + self.terms.iter().map(|&(a, w, b, e)| a * (1.0 + e * x) * (w * y + b).cos()).sum::<f64>()
    }
}

/// `f_u(y | x) ∝ Φ(u(x, y))` on `y ∈ [0,1]` (uniform base) for each `x`.
fn tilted_on_unit(link: &Link, u: &dyn Fn(f64) -> f64, grid: &[f64], w: &[f64]) -> Vec<f64> {
    let vals: Vec<f64> = grid.iter().map(|&y| link.cdf(u(y))).collect();
    let z: f64 = vals.iter().zip(w).map(|(v, w)| v * w).sum();
    vals.iter().map(|v| v / z).collect()
}

pub fn hellinger_bound(pairs: usize, seed: u64) -> Vec<Check> {
    let link = Link::Logit;
    let k = 1.0;
    let n = 401;
    let grid = uniform_grid(0.0, 1.0, n);
    let w = simpson_weights(n, 1.0 / (n - 1) as f64);
    let mut r = rng(seed);
    let mut worst_slack = f64::NEG_INFINITY;
    let mut worst_ratio = 0.0f64;
    let mut kl_const = 0.0f64;
    for _ in 0..pairs {
        let u_scale = r.random_range(0.2..2.0);
        let u = RandomSurface::draw(&mut r, u_scale);
        let d_scale = 10f64.powf(r.random_range(-3.0..0.3));
        let dv = RandomSurface::draw(&mut r, d_scale);
        let mut h2 = 0.0;
        let mut sup = 0.0f64;
        let mut ln_ratio = 0.0f64;
        let mut kl = 0.0;
        for (xi, &x) in grid.iter().enumerate() {
            let uf = |y: f64| u.eval(x, y);
            let vf = |y: f64| u.eval(x, y) + dv.eval(x, y);
            let fu = tilted_on_unit(&link, &uf, &grid, &w);
            let fv = tilted_on_unit(&link, &vf, &grid, &w);
            let mut h2x = 0.0;
            let mut klx = 0.0;
            for (g, &y) in grid.iter().enumerate() {
                sup = sup.max(dv.eval(x, y).abs());
                h2x += w[g] * (fu[g].sqrt() - fv[g].sqrt()).powi(2);
                klx += w[g] * fu[g] * (fu[g] / fv[g]).ln();
                ln_ratio = ln_ratio.max((fu[g] / fv[g]).ln().abs());
            }
            h2 += w[xi] * h2x;
            kl += w[xi] * klx;
        }
        let bound = k * k * sup * sup * (k * sup).exp();
        worst_slack = worst_slack.max(h2 - bound);
        worst_ratio = worst_ratio.max(ln_ratio / (2.0 * k * sup));
        kl_const = kl_const.max(kl / bound);
    }
    vec![
        Check::at_most(
            "8 Hellinger bound of the tilted family",
            worst_slack,
            1e-9,
            format!("max H^2 - K^2 d^2 exp(K d) over {pairs} pairs, logit link; empirical KL/bound constant {kl_const:.3}"),
        ),
        Check::at_most(
            "8 density-ratio sandwich",
            worst_ratio,
            1.0,
            "max log sup(f_u/f_v) / (2 K d)".to_string(),
        ),
    ]
}

pub fn hazard_bounds() -> Check {
    let grid: Vec<f64> = (0..=20_000).map(|i| -100.0 + i as f64 * 0.01).collect();
    let mut worst = f64::NEG_INFINITY;
    let mut constants_ok = true;
    for (link, k) in [
        (Link::Logit, 1.0),
        (Link::StudentT { nu: 1.0 }, 1.0),
        (Link::StudentT { nu: 4.0 }, 2.0),
        (Link::StudentT { nu: 10.0 }, 10f64.sqrt()),
    ] {
        constants_ok &= link.hazard_constant() == HazardBound::Finite(k);
        for &mu in &grid {
            worst = worst.max(link.hazard_ratio(mu) - k);
        }
    }
    constants_ok &= link_is_unbounded(&Link::Probit);
    let mut c = Check::at_most(
        "8 hazard ratio bounded by K (logit 1, t sqrt(nu)); probit unbounded",
        worst,
        1e-12,
        "max phi/Phi - K on mu in [-100, 100]".to_string(),
    );
    c.pass &= constants_ok;
    c
}

fn link_is_unbounded(link: &Link) -> bool {
    link.hazard_constant() == HazardBound::Unbounded && link.hazard_ratio(-30.0) > 29.0
}
