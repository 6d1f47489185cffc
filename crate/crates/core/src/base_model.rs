//! Gaussian linear base model `h(y | x, θ) = N(y; α + xᵀβ, σ²)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::augmentation::AugmentedData;
use crate::data::Covariates;
use crate::special::LN_SQRT_2PI;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseModelParams {
    pub intercept: f64,
    pub coefs: Vec<f64>,
    pub sigma: f64,
}

impl BaseModelParams {
    pub fn new(intercept: f64, coefs: Vec<f64>, sigma: f64) -> Self {
        Self { intercept, coefs, sigma }
    }

    /// `α = 0`, `β = 0`, `σ = 1`.
    pub fn standard(p: usize) -> Self {
        Self { intercept: 0.0, coefs: vec![0.0; p], sigma: 1.0 }
    }

    pub fn mean(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefs.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    pub fn log_density(&self, x: &[f64], y: f64) -> f64 {
        let z = (y - self.mean(x)) / self.sigma;
        -0.5 * z * z - LN_SQRT_2PI - self.sigma.ln()
    }
}

pub fn base_density(theta: &BaseModelParams, x: &[f64], y: f64) -> f64 {
    theta.log_density(x, y).exp()
}

pub fn base_sample<R: Rng + ?Sized>(rng: &mut R, theta: &BaseModelParams, x: &[f64]) -> f64 {
    let e: f64 = rng.sample(StandardNormal);
    theta.mean(x) + theta.sigma * e
}

/// Prior on `θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "prior", rename_all = "snake_case")]
pub enum ThetaPrior {
    /// `π(α, β, σ) ∝ 1/σ`.
    #[default]
    Flat,
    /// `(α, β) | σ² ~ N(mean, σ² scale I)`, `σ² ~ InvGamma(shape, rate)`.
    Conjugate { mean: Vec<f64>, scale: f64, shape: f64, rate: f64 },
}

impl ThetaPrior {
    /// Draw from a proper prior; `None` for the flat prior.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<BaseModelParams> {
        match self {
            ThetaPrior::Flat => None,
            ThetaPrior::Conjugate { mean, scale, shape, rate } => {
                let g: f64 = Gamma::new(*shape, 1.0 / rate).expect("valid prior").sample(rng);
                let sigma = (1.0 / g).sqrt();
                let coef: Vec<f64> = mean
                    .iter()
                    .map(|m| m + sigma * scale.sqrt() * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                Some(BaseModelParams { intercept: coef[0], coefs: coef[1..].to_vec(), sigma })
            }
        }
    }
}

/// Gibbs draw of `θ` given every accepted and rejected row of `aug`.
pub fn update_theta<R: Rng + ?Sized>(
    rng: &mut R,
    prior: &ThetaPrior,
    x: &Covariates,
    aug: &AugmentedData,
) -> Result<BaseModelParams> {
    let p = x.n_cols();
    let k = p + 1;
    // Rows of one observation share their covariates, so XᵀX and Xᵀy are
    // accumulated per observation.
    let mut xtx = DMatrix::<f64>::zeros(k, k);
    let mut xty = DVector::<f64>::zeros(k);
    let mut design_row = vec![1.0; k];
    for i in 0..aug.n_obs() {
        design_row[1..].copy_from_slice(x.row(i));
        let ys = aug.y_of(i);
        let count = ys.len() as f64;
        let sum_y: f64 = ys.iter().sum();
        for a in 0..k {
            xty[a] += design_row[a] * sum_y;
            for b in 0..=a {
                xtx[(a, b)] += count * design_row[a] * design_row[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            xtx[(b, a)] = xtx[(a, b)];
        }
    }
    let n_total = aug.n_rows() as f64;

    let (precision, rhs, shape, rate_base, prior_mean, prior_prec) = match prior {
        ThetaPrior::Flat => (xtx, xty, None, 0.0, None, 0.0),
        ThetaPrior::Conjugate { mean, scale, shape, rate } => {
            let pp = 1.0 / scale;
            let m0 = DVector::from_column_slice(mean);
            let prec = &xtx + DMatrix::<f64>::identity(k, k) * pp;
            let rhs = &xty + &m0 * pp;
            (prec, rhs, Some(*shape), *rate, Some(m0), pp)
        }
    };
    let chol = checked_cholesky(precision)?;
    let coef_hat = chol.solve(&rhs);

    let mut rss = 0.0;
    for i in 0..aug.n_obs() {
        let fitted = coef_hat[0] + (0..p).map(|j| coef_hat[j + 1] * x.row(i)[j]).sum::<f64>();
        rss += aug.y_of(i).iter().map(|y| (y - fitted).powi(2)).sum::<f64>();
    }

    let sigma2 = match (shape, prior_mean) {
        (None, _) => {
            let df = n_total - k as f64;
            if df < 1.0 {
                return Err(Error::SingularDesign);
            }
            let chi: f64 = ChiSquared::new(df).expect("df positive").sample(rng);
            rss / chi
        }
        (Some(a0), Some(m0)) => {
            let d = &coef_hat - m0;
            let rate = rate_base + 0.5 * (rss + prior_prec * d.dot(&d));
            let g: f64 = Gamma::new(a0 + 0.5 * n_total, 1.0 / rate).expect("valid").sample(rng);
            1.0 / g
        }
        (Some(_), None) => unreachable!(),
    };
    let sigma = sigma2.sqrt();

    // β ~ N(β̂, σ² P⁻¹) with P = LLᵀ: β = β̂ + σ L⁻ᵀ e.
    let e = DVector::<f64>::from_fn(k, |_, _| rng.sample(StandardNormal));
    let lt = chol.l().transpose();
    let offset = lt.solve_upper_triangular(&e).ok_or(Error::SingularDesign)?;
    let coef = coef_hat + offset * sigma;
    Ok(BaseModelParams { intercept: coef[0], coefs: coef.as_slice()[1..].to_vec(), sigma })
}

/// Cholesky factor, treating a numerically rank-deficient matrix as singular.
fn checked_cholesky(m: DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let scale = m.diagonal().max();
    let chol = m.cholesky().ok_or(Error::SingularDesign)?;
    let min_pivot = chol.l_dirty().diagonal().iter().map(|d| d * d).fold(f64::INFINITY, f64::min);
    if !(min_pivot > 1e-12 * scale) {
        return Err(Error::SingularDesign);
    }
    Ok(chol)
}

/// Least-squares fit to `(x_i, y_i)`, used to initialize chains.
pub fn least_squares(x: &Covariates, y: &[f64]) -> Result<BaseModelParams> {
    let p = x.n_cols();
    let design = DMatrix::<f64>::from_fn(y.len(), p + 1, |i, j| if j == 0 { 1.0 } else { x.row(i)[j - 1] });
    let yv = DVector::from_column_slice(y);
    let xtx = design.transpose() * &design;
    let chol = checked_cholesky(xtx)?;
    let coef = chol.solve(&(design.transpose() * &yv));
    let resid = yv - &design * &coef;
    let dof = (y.len() as f64 - (p + 1) as f64).max(1.0);
    let sigma = (resid.dot(&resid) / dof).sqrt().max(1e-6);
    Ok(BaseModelParams { intercept: coef[0], coefs: coef.as_slice()[1..].to_vec(), sigma })
}
