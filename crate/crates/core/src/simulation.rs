//! Synthetic benchmark: a two-component normal mixture in `y` whose
//! weights and locations depend on the first predictor only.
//!
//! ```text
//! Y | X ~ e^{-2 X_1} N(X_1, 0.1²) + (1 - e^{-2 X_1}) N(X_1⁴, 0.2²)
//! ```
//!
//! with `X ~ Uniform([0, 1]^P)`.

use rand::{Rng, RngExt};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Covariates;
use crate::special::norm_pdf;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureDesign {
    pub n: usize,
    pub p: usize,
}

impl MixtureDesign {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.n == 0 || self.p == 0 {
            return Err(format!("design needs n >= 1 and p >= 1, got n={} p={}", self.n, self.p));
        }
        Ok(())
    }
}

/// Simulated predictors and raw-scale responses.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub x: Covariates,
    pub y: Vec<f64>,
}

impl SimulatedData {
    pub fn predictor_names(&self) -> Vec<String> {
        (1..=self.x.n_cols()).map(|j| format!("x{j}")).collect()
    }
}

/// Weight of the first component at `x1`.
pub fn mixture_weight(x1: f64) -> f64 {
    (-2.0 * x1).exp()
}

/// Draw `y` given the active predictor.
pub fn sample_response<R: Rng + ?Sized>(rng: &mut R, x1: f64) -> f64 {
    let e: f64 = rng.sample(StandardNormal);
    if rng.random::<f64>() < mixture_weight(x1) {
        x1 + 0.1 * e
    } else {
        x1.powi(4) + 0.2 * e
    }
}

pub fn gen_mixture<R: Rng + ?Sized>(rng: &mut R, design: &MixtureDesign) -> SimulatedData {
    let mut values = Vec::with_capacity(design.n * design.p);
    let mut y = Vec::with_capacity(design.n);
    for _ in 0..design.n {
        let start = values.len();
        for _ in 0..design.p {
            values.push(rng.random::<f64>());
        }
        y.push(sample_response(rng, values[start]));
    }
    SimulatedData { x: Covariates::new(design.n, design.p, values), y }
}

/// True conditional density at raw `(x1, y)`.
pub fn mixture_true_density(x1: f64, y: f64) -> f64 {
    let w = mixture_weight(x1);
    w * norm_pdf((y - x1) / 0.1) / 0.1 + (1.0 - w) * norm_pdf((y - x1.powi(4)) / 0.2) / 0.2
}

/// True conditional cdf.
pub fn mixture_true_cdf(x1: f64, y: f64) -> f64 {
    let w = mixture_weight(x1);
    w * crate::special::norm_cdf((y - x1) / 0.1) + (1.0 - w) * crate::special::norm_cdf((y - x1.powi(4)) / 0.2)
}

/// True conditional mean.
pub fn mixture_true_mean(x1: f64) -> f64 {
    let w = mixture_weight(x1);
    w * x1 + (1.0 - w) * x1.powi(4)
}
