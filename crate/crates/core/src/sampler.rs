//! The chain driver: one sweep is
//!
//! 1. impute rejected proposals for every observation,
//! 2. update the base-model parameters from all rows,
//! 3. draw latent utilities, then
//! 4. precisions,
//! 5. update each tree in turn,
//!
//! followed by the hyperparameter refreshes.

use rand::{Rng, RngExt, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::augmentation::{refresh_latents, rejection_augment_with, AugmentedData};
use crate::backfitting::{update_hyperparameters, update_tree_and_basis, FitCache, ForestState, Hyperpriors};
use crate::base_model::{base_sample, least_squares, update_theta};
use crate::data::Covariates;
use crate::fourier_basis::KernelFamily;
use crate::links::Link;
use crate::soft_trees::MoveKind;
use crate::{ChainRng, Error, Result};

/// Chain length and model-structure settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSettings {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub rejection_cap: usize,
    pub n_trees: usize,
    pub link: Link,
    pub kernel: KernelFamily,
}

/// Per-sweep diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepInfo {
    pub total_rejected: usize,
    pub tree_accepts: usize,
    pub basis_accepts: usize,
    pub bandwidth_accepts: usize,
    pub prior_moves: usize,
}

/// Impute the rejected proposals for every observation under `state`.
pub fn augment<R: Rng + ?Sized>(
    rng: &mut R,
    state: &ForestState,
    x: &Covariates,
    y: &[f64],
    cap: usize,
) -> Result<AugmentedData> {
    let mut rejected = Vec::with_capacity(y.len());
    for i in 0..y.len() {
        let xi = x.row(i);
        let g = state.tree_outputs(xi);
        let link = state.link;
        let rej = rejection_augment_with(rng, &state.theta, xi, i, cap, |yy| {
            link.cdf(state.eval_r_from_outputs(yy, &g))
        })?;
        rejected.push(rej);
    }
    Ok(AugmentedData::from_rejections(y, rejected))
}

/// Draw a response and its rejected proposals for every row of `x` from
/// the model at `state`: the first accepted proposal is the response.
pub fn simulate_responses<R: Rng + ?Sized>(
    rng: &mut R,
    state: &ForestState,
    x: &Covariates,
    cap: usize,
) -> Result<AugmentedData> {
    let n = x.n_rows();
    let mut y = Vec::with_capacity(n);
    let mut rejected = Vec::with_capacity(n);
    for i in 0..n {
        let xi = x.row(i);
        let g = state.tree_outputs(xi);
        let mut rej = Vec::new();
        loop {
            let cand = base_sample(rng, &state.theta, xi);
            if rng.random::<f64>() < state.link.cdf(state.eval_r_from_outputs(cand, &g)) {
                y.push(cand);
                break;
            }
            rej.push(cand);
            if rej.len() > cap {
                return Err(Error::DivergingRejection { obs: i, cap });
            }
        }
        rejected.push(rej);
    }
    Ok(AugmentedData::from_rejections(&y, rejected))
}

/// One full sweep.
pub fn sweep<R: Rng + ?Sized>(
    rng: &mut R,
    state: &mut ForestState,
    hp: &Hyperpriors,
    x: &Covariates,
    y: &[f64],
    cap: usize,
) -> Result<SweepInfo> {
    let mut aug = augment(rng, state, x, y, cap)?;
    state.theta = update_theta(rng, &hp.theta_prior, x, &aug)?;
    let mut cache = FitCache::build(state, &aug, x);
    refresh_latents(rng, &state.link, &mut aug, cache.fit());
    let mut info = SweepInfo { total_rejected: aug.total_rejected(), ..SweepInfo::default() };
    for k in 0..state.n_trees() {
        let t = update_tree_and_basis(rng, state, hp, &aug, x, &mut cache, k)?;
        info.tree_accepts += t.tree_accepted as usize;
        info.basis_accepts += t.basis_accepted as usize;
        info.bandwidth_accepts += t.bandwidth_accepted as usize;
        info.prior_moves += (t.move_kind == Some(MoveKind::Prior)) as usize;
    }
    update_hyperparameters(rng, state, hp, &aug, &mut cache);
    Ok(info)
}

/// Generator for chain `chain`: the shared seed with its own stream.
pub fn chain_rng(seed: u64, chain: usize) -> ChainRng {
    let mut rng = ChainRng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

/// A retained posterior draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub chain: usize,
    pub iteration: usize,
    pub total_rejected: usize,
    pub state: ForestState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainOutput {
    pub chain: usize,
    pub draws: Vec<Draw>,
    /// `Σ_i J_i` at every iteration, burn-in included.
    pub rejected_trace: Vec<usize>,
    pub tree_acceptance: f64,
    pub basis_acceptance: f64,
    pub bandwidth_acceptance: f64,
    pub final_state: ForestState,
    pub final_rng: ChainRng,
}

/// Run one chain from a least-squares start.
pub fn run_chain(
    x: &Covariates,
    y: &[f64],
    hp: &Hyperpriors,
    settings: &ChainSettings,
    seed: u64,
    chain: usize,
) -> Result<ChainOutput> {
    let mut rng = chain_rng(seed, chain);
    let theta = least_squares(x, y)?;
    let mut state = ForestState::initial(&mut rng, hp, settings.n_trees, settings.kernel, settings.link, theta);
    let mut draws = Vec::new();
    let mut trace = Vec::with_capacity(settings.iterations);
    let (mut ta, mut ba, mut wa) = (0usize, 0usize, 0usize);
    for it in 0..settings.iterations {
        let info = sweep(&mut rng, &mut state, hp, x, y, settings.rejection_cap)
            .map_err(|e| Error::AtIteration { chain, iteration: it, source: Box::new(e) })?;
        trace.push(info.total_rejected);
        ta += info.tree_accepts;
        ba += info.basis_accepts;
        wa += info.bandwidth_accepts;
        if it >= settings.burn_in && (it - settings.burn_in) % settings.thin == 0 {
            draws.push(Draw { chain, iteration: it, total_rejected: info.total_rejected, state: state.clone() });
        }
        if (it + 1) % 500 == 0 {
            log::info!("chain {chain}: iteration {} of {}, rejected {}", it + 1, settings.iterations, info.total_rejected);
        }
    }
    let denom = (settings.iterations * settings.n_trees).max(1) as f64;
    Ok(ChainOutput {
        chain,
        draws,
        rejected_trace: trace,
        tree_acceptance: ta as f64 / denom,
        basis_acceptance: ba as f64 / denom,
        bandwidth_acceptance: wa as f64 / denom,
        final_state: state,
        final_rng: rng,
    })
}

/// Run `chains` chains in parallel; results are ordered by chain index.
pub fn run_chains(
    x: &Covariates,
    y: &[f64],
    hp: &Hyperpriors,
    settings: &ChainSettings,
    seed: u64,
    chains: usize,
) -> Result<Vec<ChainOutput>> {
    if chains == 1 {
        return Ok(vec![run_chain(x, y, hp, settings, seed, 0)?]);
    }
    let results: Vec<Result<ChainOutput>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..chains)
            .map(|c| scope.spawn(move || run_chain(x, y, hp, settings, seed, c)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
    });
    results.into_iter().collect()
}
