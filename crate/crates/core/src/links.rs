//! Link functions Φ mapping the tree ensemble output to an acceptance
//! probability, together with the hazard-ratio constant `K` bounding
//! `φ(μ)/Φ(μ)`.

use serde::{Deserialize, Serialize};

use crate::special;

/// The symmetric cdf used as acceptance link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "link", rename_all = "lowercase")]
pub enum Link {
    Probit,
    Logit,
    #[serde(rename = "t")]
    StudentT { nu: f64 },
}

/// Value, density and log-value of a link at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkEval {
    pub cdf: f64,
    pub density: f64,
    pub log_cdf: f64,
}

/// Supremum of `φ(μ)/Φ(μ)` over the real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HazardBound {
    Finite(f64),
    Unbounded,
}

impl HazardBound {
    pub fn finite(self) -> Option<f64> {
        match self {
            HazardBound::Finite(k) => Some(k),
            HazardBound::Unbounded => None,
        }
    }
}

impl Default for Link {
    fn default() -> Self {
        Link::Probit
    }
}

impl Link {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            Link::StudentT { nu } if !(nu > 0.0 && nu.is_finite()) => {
                Err(format!("t link needs nu > 0, got {nu}"))
            }
            _ => Ok(()),
        }
    }

    pub fn cdf(&self, mu: f64) -> f64 {
        match *self {
            Link::Probit => special::norm_cdf(mu),
            Link::Logit => special::sigmoid(mu),
            Link::StudentT { nu } => special::student_t_cdf(mu, nu),
        }
    }

    pub fn density(&self, mu: f64) -> f64 {
        match *self {
            Link::Probit => special::norm_pdf(mu),
            Link::Logit => special::logistic_pdf(mu),
            Link::StudentT { nu } => special::student_t_pdf(mu, nu),
        }
    }

    pub fn log_cdf(&self, mu: f64) -> f64 {
        match *self {
            Link::Probit => special::norm_log_cdf(mu),
            Link::Logit => special::log_sigmoid(mu),
            Link::StudentT { nu } => special::student_t_log_cdf(mu, nu),
        }
    }

    /// `ln(1 - Φ(μ)) = ln Φ(-μ)` by symmetry.
    pub fn log_sf(&self, mu: f64) -> f64 {
        self.log_cdf(-mu)
    }

    pub fn eval(&self, mu: f64) -> LinkEval {
        LinkEval {
            cdf: self.cdf(mu),
            density: self.density(mu),
            log_cdf: self.log_cdf(mu),
        }
    }

    /// The constant `K` with `φ(μ)/Φ(μ) ≤ K` for all μ: 1 for the logistic,
    /// `√ν` for Student-t, and no finite value for the probit.
    pub fn hazard_constant(&self) -> HazardBound {
        match *self {
            Link::Probit => HazardBound::Unbounded,
            Link::Logit => HazardBound::Finite(1.0),
            Link::StudentT { nu } => HazardBound::Finite(nu.sqrt()),
        }
    }

    /// `φ(μ)/Φ(μ)`, evaluated in log space.
    pub fn hazard_ratio(&self, mu: f64) -> f64 {
        (self.density(mu).ln() - self.log_cdf(mu)).exp()
    }
}

impl std::fmt::Display for Link {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Link::Probit => write!(f, "probit"),
            Link::Logit => write!(f, "logit"),
            Link::StudentT { nu } => write!(f, "t({nu})"),
        }
    }
}
