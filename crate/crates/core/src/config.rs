//! Run configuration, read from TOML.
//!
//! Every field has a default, so an empty file is a valid configuration
//! apart from the data path. [`RunConfig::default_toml`] renders the
//! commented template written by `sbartds init`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backfitting::Hyperpriors;
use crate::base_model::ThetaPrior;
use crate::fourier_basis::KernelFamily;
use crate::links::Link;
use crate::soft_trees::MoveWeights;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub path: PathBuf,
    pub response: String,
    /// Predictor columns; empty means every column except the response.
    pub predictors: Vec<String>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { path: PathBuf::from("data.csv"), response: "y".into(), predictors: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkName {
    Probit,
    Logit,
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelName {
    SquaredExponential,
    Matern,
    Cauchy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub link: LinkName,
    /// Degrees of freedom of the t link.
    pub nu: f64,
    pub n_trees: usize,
    pub kernel: KernelName,
    /// Smoothness of the Matern kernel.
    pub matern_nu: f64,
    pub rho2_prior_shape: f64,
    pub rho2_prior_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            link: LinkName::Probit,
            nu: 4.0,
            n_trees: 50,
            kernel: KernelName::SquaredExponential,
            matern_nu: 1.0,
            rho2_prior_shape: 1.0,
            rho2_prior_rate: PI * PI / 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub alpha: f64,
    pub beta: f64,
    pub max_depth: usize,
    pub sigma_mu_scale: f64,
    pub gamma_mean: f64,
    pub gamma_sd: f64,
    pub tau_mean: f64,
    pub a_beta_shape1: f64,
    pub a_beta_shape2: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        let hp = Hyperpriors::default();
        Self {
            alpha: hp.alpha,
            beta: hp.beta,
            max_depth: hp.max_depth,
            sigma_mu_scale: hp.sigma_mu_scale,
            gamma_mean: hp.gamma_mean,
            gamma_sd: hp.gamma_sd,
            tau_mean: hp.tau_mean,
            a_beta_shape1: hp.a_beta_shape1,
            a_beta_shape2: hp.a_beta_shape2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
    pub rejection_cap: usize,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self { iterations: 3000, burn_in: 1000, thin: 1, chains: 1, seed: 42, rejection_cap: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub y_grid_points: usize,
    /// Grid margin beyond the data range, in base-model residual sds.
    pub y_grid_sd_margin: f64,
    /// Query points on the raw predictor scale; empty means the first
    /// predictor at its 10/30/50/70/90% quantiles with the others at
    /// their medians.
    pub x_queries: Vec<Vec<f64>>,
    pub band_level: f64,
    /// Cap on the number of draws written to the long density file
    /// (evenly spaced; 0 writes all).
    pub max_density_draws: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("sbartds_out"),
            y_grid_points: 512,
            y_grid_sd_margin: 3.0,
            x_queries: Vec::new(),
            band_level: 0.95,
            max_density_draws: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    pub prior: PriorConfig,
    pub mcmc: McmcConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.mcmc;
        if m.iterations <= m.burn_in {
            return Err(Error::Config(format!(
                "iterations ({}) must exceed burn_in ({})",
                m.iterations, m.burn_in
            )));
        }
        if m.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if m.chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        if m.rejection_cap == 0 {
            return Err(Error::Config("rejection_cap must be at least 1".into()));
        }
        if self.model.n_trees == 0 {
            return Err(Error::Config("n_trees must be at least 1".into()));
        }
        if self.output.y_grid_points < 64 {
            return Err(Error::Config("y_grid_points must be at least 64".into()));
        }
        if !(self.output.band_level > 0.0 && self.output.band_level < 1.0) {
            return Err(Error::Config("band_level must lie in (0, 1)".into()));
        }
        if !(self.output.y_grid_sd_margin >= 0.0) {
            return Err(Error::Config("y_grid_sd_margin must be nonnegative".into()));
        }
        self.link().validate().map_err(Error::Config)?;
        crate::fourier_basis::Kernel::new(self.kernel_family(), 1.0).validate().map_err(Error::Config)?;
        self.hyperpriors().validate().map_err(Error::Config)?;
        Ok(())
    }

    pub fn link(&self) -> Link {
        match self.model.link {
            LinkName::Probit => Link::Probit,
            LinkName::Logit => Link::Logit,
            LinkName::T => Link::StudentT { nu: self.model.nu },
        }
    }

    pub fn kernel_family(&self) -> KernelFamily {
        match self.model.kernel {
            KernelName::SquaredExponential => KernelFamily::SquaredExponential,
            KernelName::Matern => KernelFamily::Matern { nu: self.model.matern_nu },
            KernelName::Cauchy => KernelFamily::Cauchy,
        }
    }

    pub fn hyperpriors(&self) -> Hyperpriors {
        let p = &self.prior;
        Hyperpriors {
            alpha: p.alpha,
            beta: p.beta,
            max_depth: p.max_depth,
            sigma_mu_scale: p.sigma_mu_scale,
            gamma_mean: p.gamma_mean,
            gamma_sd: p.gamma_sd,
            tau_mean: p.tau_mean,
            a_beta_shape1: p.a_beta_shape1,
            a_beta_shape2: p.a_beta_shape2,
            rho2_shape: self.model.rho2_prior_shape,
            rho2_rate: self.model.rho2_prior_rate,
            move_weights: MoveWeights::default(),
            theta_prior: ThetaPrior::Flat,
            ..Hyperpriors::default()
        }
    }

    /// The commented default configuration.
    pub fn default_toml() -> String {
        let d = RunConfig::default();
        format!(
            r#"# sbartds run configuration

[data]
# CSV file with a header row
path = "{path}"
# response column
response = "{response}"
# predictor columns; empty uses every other column
predictors = []

[model]
# "probit", "logit" or "t"
link = "probit"
# degrees of freedom when link = "t"
nu = {nu:?}
# number of trees M
n_trees = {n_trees}
# "squared_exponential", "matern" or "cauchy"
kernel = "squared_exponential"
# smoothness when kernel = "matern"
matern_nu = {matern_nu:?}
# rho^2 ~ Gamma(shape, rate)
rho2_prior_shape = {rho2_shape:?}
rho2_prior_rate = {rho2_rate:?}

[prior]
# branch probability alpha (1 + depth)^(-beta)
alpha = {alpha:?}
beta = {beta:?}
max_depth = {max_depth}
# sigma_mu ~ Half-Cauchy(0, sigma_mu_scale)
sigma_mu_scale = {sigma_mu_scale:?}
# gamma ~ Normal(gamma_mean, gamma_sd^2)
gamma_mean = {gamma_mean:?}
gamma_sd = {gamma_sd:?}
# tau_m ~ Exponential with this mean
tau_mean = {tau_mean:?}
# a / (a + P) ~ Beta(a_beta_shape1, a_beta_shape2)
a_beta_shape1 = {a1:?}
a_beta_shape2 = {a2:?}

[mcmc]
iterations = {iterations}
burn_in = {burn_in}
thin = {thin}
chains = {chains}
seed = {seed}
# per-observation limit on rejected proposals
rejection_cap = {cap}

[output]
dir = "{dir}"
y_grid_points = {grid_points}
# grid margin beyond the data range, in base-model sds
y_grid_sd_margin = {margin:?}
# raw-scale query points, e.g. [[0.1, 0.5], [0.9, 0.5]]
x_queries = []
band_level = {level:?}
# draws written to densities.csv (0 = all)
max_density_draws = {max_draws}
"#,
            path = d.data.path.display(),
            response = d.data.response,
            nu = d.model.nu,
            n_trees = d.model.n_trees,
            matern_nu = d.model.matern_nu,
            rho2_shape = d.model.rho2_prior_shape,
            rho2_rate = d.model.rho2_prior_rate,
            alpha = d.prior.alpha,
            beta = d.prior.beta,
            max_depth = d.prior.max_depth,
            sigma_mu_scale = d.prior.sigma_mu_scale,
            gamma_mean = d.prior.gamma_mean,
            gamma_sd = d.prior.gamma_sd,
            tau_mean = d.prior.tau_mean,
            a1 = d.prior.a_beta_shape1,
            a2 = d.prior.a_beta_shape2,
            iterations = d.mcmc.iterations,
            burn_in = d.mcmc.burn_in,
            thin = d.mcmc.thin,
            chains = d.mcmc.chains,
            seed = d.mcmc.seed,
            cap = d.mcmc.rejection_cap,
            dir = d.output.dir.display(),
            grid_points = d.output.y_grid_points,
            margin = d.output.y_grid_sd_margin,
            level = d.output.band_level,
            max_draws = d.output.max_density_draws,
        )
    }
}
