//! The two augmentation layers.
//!
//! Each observation `Y_i` is treated as the first accepted proposal of a
//! thinning sampler that draws from `h(· | X_i, θ)` and accepts with
//! probability `Φ{r(y, X_i)}`; the rejected proposals `Y_{i1..iJ_i}` are
//! imputed. Every row then gets a latent utility `Z_{ij}` whose sign
//! encodes acceptance, and for the logit and t links a precision `λ_{ij}`
//! that makes `Z_{ij}` conditionally Gaussian.

use std::f64::consts::{LN_2, PI};

use rand::{Rng, RngExt};
use rand_distr::{Distribution, Exp, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::base_model::{base_sample, BaseModelParams};
use crate::links::Link;
use crate::special;
use crate::{Error, Result};

/// Flat storage of all rows. The rows of observation `i` are
/// `offsets[i]..offsets[i + 1]`, and the first of them is the observed
/// point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedData {
    offsets: Vec<usize>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub lambda: Vec<f64>,
    row_obs: Vec<usize>,
}

impl AugmentedData {
    /// Rows for the observed points alone (`J_i = 0`).
    pub fn observed_only(y_obs: &[f64]) -> Self {
        Self::from_rejections(y_obs, vec![Vec::new(); y_obs.len()])
    }

    /// Assemble from observed responses and per-observation rejected draws.
    /// Latent utilities start at `±1` and precisions at one.
    pub fn from_rejections(y_obs: &[f64], rejected: Vec<Vec<f64>>) -> Self {
        assert_eq!(y_obs.len(), rejected.len());
        let n_rows = y_obs.len() + rejected.iter().map(Vec::len).sum::<usize>();
        let mut offsets = Vec::with_capacity(y_obs.len() + 1);
        let mut y = Vec::with_capacity(n_rows);
        let mut z = Vec::with_capacity(n_rows);
        let mut row_obs = Vec::with_capacity(n_rows);
        for (i, (&yo, rej)) in y_obs.iter().zip(&rejected).enumerate() {
            offsets.push(y.len());
            y.push(yo);
            z.push(1.0);
            row_obs.push(i);
            for &yr in rej {
                y.push(yr);
                z.push(-1.0);
                row_obs.push(i);
            }
        }
        offsets.push(y.len());
        Self { offsets, y, z, lambda: vec![1.0; n_rows], row_obs }
    }

    pub fn n_obs(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn rows_of(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn y_of(&self, i: usize) -> &[f64] {
        &self.y[self.rows_of(i)]
    }

    /// Observation owning `row`.
    pub fn obs_of(&self, row: usize) -> usize {
        self.row_obs[row]
    }

    /// True for the observed (accepted) row of each observation.
    pub fn is_accepted(&self, row: usize) -> bool {
        self.offsets[self.row_obs[row]] == row
    }

    /// `J_i`.
    pub fn n_rejected(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i] - 1
    }

    pub fn total_rejected(&self) -> usize {
        self.n_rows() - self.n_obs()
    }
}

/// Draw the rejected proposals for one observation.
///
/// Proposals come from `h(· | x, θ)` and are accepted with probability
/// `accept_prob(y)`; the function returns the proposals drawn before the
/// first acceptance. `obs` is only used to label the error when more than
/// `cap` proposals are rejected.
pub fn rejection_augment_with<R: Rng + ?Sized>(
    rng: &mut R,
    theta: &BaseModelParams,
    x: &[f64],
    obs: usize,
    cap: usize,
    accept_prob: impl Fn(f64) -> f64,
) -> Result<Vec<f64>> {
    let mut rejected = Vec::new();
    loop {
        let y = base_sample(rng, theta, x);
        if rng.random::<f64>() < accept_prob(y) {
            return Ok(rejected);
        }
        rejected.push(y);
        if rejected.len() > cap {
            return Err(Error::DivergingRejection { obs, cap });
        }
    }
}

/// Standard normal draw conditioned on exceeding `a`.
pub fn normal_truncated_below<R: Rng + ?Sized>(rng: &mut R, a: f64) -> f64 {
    if a <= 5.0 {
        let u = rng.random::<f64>();
        let x = -special::norm_quantile(u * special::norm_cdf(-a));
        return x.max(a);
    }
    // exponential-proposal rejection with the optimal rate
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    let exp = Exp::new(rate).expect("positive rate");
    loop {
        let x = a + exp.sample(rng);
        if rng.random::<f64>().ln() < -0.5 * (x - rate).powi(2) {
            return x;
        }
    }
}

/// Standard logistic draw conditioned on exceeding `a`, by inversion of
/// the survival function in log space.
pub fn logistic_truncated_below<R: Rng + ?Sized>(rng: &mut R, a: f64) -> f64 {
    let ln_v = rng.random::<f64>().ln() + special::log_sigmoid(-a);
    let x = (-ln_v.exp()).ln_1p() - ln_v;
    x.max(a)
}

/// Quantile of the t distribution from the log of a lower-tail probability
/// at most one half.
fn student_t_quantile_from_log(ln_p: f64, nu: f64) -> f64 {
    if ln_p > -30.0 {
        return special::student_t_quantile(ln_p.exp(), nu);
    }
    // T(t) ≈ c |t|^{-ν} / ν for t → -∞, then Newton on ln T(t) - ln p.
    let ln_c = special::ln_gamma(0.5 * (nu + 1.0))
        - special::ln_gamma(0.5 * nu)
        - 0.5 * (nu * PI).ln()
        + 0.5 * (nu + 1.0) * nu.ln()
        - nu.ln();
    let mut t = -((ln_c - ln_p) / nu).exp();
    for _ in 0..100 {
        let f = special::student_t_log_cdf(t, nu) - ln_p;
        let hazard = (special::student_t_log_pdf(t, nu) - special::student_t_log_cdf(t, nu)).exp();
        let step = f / hazard;
        let next = if t - step < 0.0 { t - step } else { 0.5 * t };
        if (next - t).abs() <= 1e-13 * t.abs() {
            return next;
        }
        t = next;
    }
    t
}

/// Student-t draw conditioned on exceeding `a`.
pub fn student_t_truncated_below<R: Rng + ?Sized>(rng: &mut R, a: f64, nu: f64) -> f64 {
    // By symmetry draw η < -a with T(η) = U T(-a), then return -η.
    let ln_u = rng.random::<f64>().ln();
    let ln_p = ln_u + special::student_t_log_cdf(-a, nu);
    let eta = if ln_p < -LN_2 {
        student_t_quantile_from_log(ln_p, nu)
    } else {
        // upper part: invert the survival side for accuracy
        let ln_q = (-ln_p.exp()).ln_1p();
        -student_t_quantile_from_log(ln_q, nu)
    };
    (-eta).max(a)
}

/// Standard draw from the link's location family, conditioned on `> a`.
pub fn link_truncated_below<R: Rng + ?Sized>(rng: &mut R, link: &Link, a: f64) -> f64 {
    match *link {
        Link::Probit => normal_truncated_below(rng, a),
        Link::Logit => logistic_truncated_below(rng, a),
        Link::StudentT { nu } => student_t_truncated_below(rng, a, nu),
    }
}

/// `Z ~ f(z - μ)` truncated to `(0, ∞)` when `accepted`, else `(-∞, 0)`.
/// The sign is guaranteed even when rounding would put the draw on zero.
pub fn sample_latent_z<R: Rng + ?Sized>(rng: &mut R, link: &Link, mu: f64, accepted: bool) -> f64 {
    for _ in 0..8 {
        let z = if accepted {
            mu + link_truncated_below(rng, link, -mu)
        } else {
            mu - link_truncated_below(rng, link, mu)
        };
        if (accepted && z > 0.0) || (!accepted && z < 0.0) {
            return z;
        }
    }
    let tiny = f64::MIN_POSITIVE.max(1e-300 * mu.abs());
    if accepted {
        tiny
    } else {
        -tiny
    }
}

/// `λ` given `Z`, as a precision: `Z | λ ~ N(μ, 1/λ)`.
pub fn sample_lambda<R: Rng + ?Sized>(rng: &mut R, link: &Link, z: f64, mu: f64) -> f64 {
    match *link {
        Link::Probit => 1.0,
        Link::StudentT { nu } => {
            let rate = 0.5 * (nu + (z - mu).powi(2));
            let g: f64 = Gamma::new(0.5 * (nu + 1.0), 1.0 / rate).expect("valid gamma").sample(rng);
            g.max(f64::MIN_POSITIVE)
        }
        Link::Logit => 1.0 / sample_logit_variance(rng, z - mu),
    }
}

/// Holmes-Held draw of the mixing variance `v` for the logistic scale
/// mixture, given residual `r`: density proportional to
/// `v^{-1/2} exp(-r²/(2v)) π_KS(v)` where `√v/2` follows the
/// Kolmogorov-Smirnov law.
pub fn sample_logit_variance<R: Rng + ?Sized>(rng: &mut R, r: f64) -> f64 {
    let r_abs = r.abs();
    loop {
        let v = sample_gig_half(rng, r_abs);
        let u: f64 = rng.random();
        let accepted = if v > 4.0 / 3.0 { rightmost_interval(u, v) } else { leftmost_interval(u, v) };
        if accepted {
            return v;
        }
    }
}

/// `GIG(1/2, 1, r²)` proposal by the Michael-Schucany-Haas transform.
fn sample_gig_half<R: Rng + ?Sized>(rng: &mut R, r: f64) -> f64 {
    let n: f64 = rng.sample(StandardNormal);
    let y2 = n * n;
    if r == 0.0 {
        return y2.max(f64::MIN_POSITIVE);
    }
    let w = y2 / (2.0 * r);
    // smaller root of the MSH quadratic, written without cancellation
    let y = 1.0 / (1.0 + w + (w * w + 2.0 * w).sqrt());
    let u: f64 = rng.random();
    let v = if u <= 1.0 / (1.0 + y) { r / y } else { r * y };
    v.max(f64::MIN_POSITIVE)
}

fn rightmost_interval(u: f64, v: f64) -> bool {
    let mut z = 1.0;
    let x = (-0.5 * v).exp();
    let mut j: i64 = 0;
    loop {
        j += 1;
        let k = ((j + 1) * (j + 1)) as f64;
        z -= k * x.powf(k - 1.0);
        if z > u {
            return true;
        }
        j += 1;
        let k = ((j + 1) * (j + 1)) as f64;
        z += k * x.powf(k - 1.0);
        if z < u {
            return false;
        }
    }
}

fn leftmost_interval(u: f64, v: f64) -> bool {
    let h = 0.5 * LN_2 + 2.5 * PI.ln() - 2.5 * v.ln() - PI * PI / (2.0 * v) + 0.5 * v;
    let ln_u = u.ln();
    let mut z = 1.0;
    let x = (-PI * PI / (2.0 * v)).exp();
    let k = v / (PI * PI);
    let mut j: i64 = 0;
    loop {
        j += 1;
        z -= k * x.powf((j * j) as f64 - 1.0);
        if h + z.ln() > ln_u {
            return true;
        }
        j += 1;
        let kk = ((j + 1) * (j + 1)) as f64;
        z += kk * x.powf(kk - 1.0);
        if h + z.ln() < ln_u {
            return false;
        }
    }
}

/// Fresh `Z` and `λ` for every row given the linear predictor `mu[row]`.
pub fn refresh_latents<R: Rng + ?Sized>(rng: &mut R, link: &Link, aug: &mut AugmentedData, mu: &[f64]) {
    for row in 0..aug.n_rows() {
        let accepted = aug.is_accepted(row);
        let z = sample_latent_z(rng, link, mu[row], accepted);
        aug.z[row] = z;
        aug.lambda[row] = sample_lambda(rng, link, z, mu[row]);
    }
}
