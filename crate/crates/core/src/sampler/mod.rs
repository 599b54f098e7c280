//! Gradient-based MCMC: NUTS chains, warm-up adaptation, convergence
//! diagnostics, and the model-fitting front end.

pub mod diagnostics;
mod nuts;
pub mod persist;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::PreparedDataset;
use crate::model::{self, ModelKind, ParamLayout, PriorConfig};
use crate::stats;

pub use diagnostics::{ess_bulk, mcse_mean, split_rhat};
pub use nuts::{leapfrog, run_nuts, MAX_ENERGY_ERROR};

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("could not find a finite log density after {0} initialization draws")]
    StartupFailure(usize),
    #[error("target dimension must be at least 1")]
    ZeroDim,
    #[error("need at least 1 chain and 1 draw per chain")]
    EmptyRun,
    #[error(transparent)]
    Model(#[from] model::ModelError),
}

/// Chain counts, adaptation settings, and the master seed. Defaults mirror
/// the reference fits: three chains of 500 warm-up and 2,500 kept draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    pub draws_per_chain: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub seed: u64,
    pub step_size_init: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 3,
            warmup: 500,
            draws_per_chain: 2500,
            target_accept: 0.8,
            max_tree_depth: 10,
            seed: 0,
            step_size_init: 1.0,
        }
    }
}

/// Post-warm-up draws with per-chain sampler statistics.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub dim: usize,
    pub chains: usize,
    pub draws_per_chain: usize,
    /// Flat row-major draws: chain, then draw, then coordinate.
    pub draws: Vec<f64>,
    pub divergence_count: Vec<usize>,
    /// Per chain, counts of transitions by tree depth.
    pub tree_depth_histogram: Vec<Vec<u64>>,
    /// Adapted step size per chain.
    pub step_size: Vec<f64>,
    /// Adapted mass-matrix diagonal per chain.
    pub mass_diag: Vec<Vec<f64>>,
    pub wall_time: std::time::Duration,
}

impl PosteriorDraws {
    pub fn draw(&self, chain: usize, index: usize) -> &[f64] {
        let start = (chain * self.draws_per_chain + index) * self.dim;
        &self.draws[start..start + self.dim]
    }

    /// All draws of one parameter within one chain.
    pub fn param_chain(&self, chain: usize, param: usize) -> Vec<f64> {
        (0..self.draws_per_chain)
            .map(|i| self.draw(chain, i)[param])
            .collect()
    }

    /// Per-chain draw vectors for one parameter.
    pub fn param_chains(&self, param: usize) -> Vec<Vec<f64>> {
        (0..self.chains)
            .map(|c| self.param_chain(c, param))
            .collect()
    }

    /// All chains pooled for one parameter.
    pub fn pooled_param(&self, param: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.chains * self.draws_per_chain);
        for c in 0..self.chains {
            out.extend(self.param_chain(c, param));
        }
        out
    }

    pub fn total_draws(&self) -> usize {
        self.chains * self.draws_per_chain
    }

    pub fn total_divergences(&self) -> usize {
        self.divergence_count.iter().sum()
    }
}

/// Posterior summary for one flat parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q5: f64,
    pub q95: f64,
    pub rhat: f64,
    pub ess_bulk: f64,
}

/// Fit-level convergence summary. R-hat sentinels (NaN from constant
/// parameters) are excluded from the max and the flag count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub params: Vec<ParamSummary>,
    pub max_rhat: f64,
    pub min_ess: f64,
    pub total_divergences: usize,
    pub rhat_flagged: usize,
}

impl FitSummary {
    /// The acceptance signal used by strict runs: no divergences and no
    /// split R-hat above 1.1.
    pub fn passes_strict_gate(&self) -> bool {
        self.total_divergences == 0 && self.rhat_flagged == 0
    }
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub draws: PosteriorDraws,
    pub summary: FitSummary,
}

/// Fit a model kind to prepared data: wires the log posterior and gradient
/// into NUTS and summarizes the draws.
pub fn fit(
    kind: ModelKind,
    data: &PreparedDataset,
    prior: &PriorConfig,
    config: &SamplerConfig,
) -> Result<FitOutput, SamplerError> {
    let layout = ParamLayout::for_dataset(data);
    // Surface layout errors before the sampler starts.
    model::log_posterior(kind, &vec![0.0; layout.dim()], data, prior)?;

    let log_density = |params: &[f64]| -> f64 {
        model::log_posterior(kind, params, data, prior).unwrap_or(f64::NEG_INFINITY)
    };
    let grad = |params: &[f64]| -> Vec<f64> {
        model::grad_log_posterior(kind, params, data, prior)
            .unwrap_or_else(|_| vec![f64::NAN; params.len()])
    };

    let draws = run_nuts(log_density, grad, layout.dim(), config)?;
    let summary = summarize(&draws, &layout.names());
    Ok(FitOutput { draws, summary })
}

/// Per-parameter posterior summaries plus fit-level convergence flags.
pub fn summarize(draws: &PosteriorDraws, names: &[String]) -> FitSummary {
    assert_eq!(names.len(), draws.dim, "name count must match dimension");
    let mut params = Vec::with_capacity(draws.dim);
    let mut max_rhat = f64::NAN;
    let mut min_ess = f64::NAN;
    let mut flagged = 0usize;
    for j in 0..draws.dim {
        let chains = draws.param_chains(j);
        let pooled = draws.pooled_param(j);
        let rhat = split_rhat(&chains);
        let ess = ess_bulk(&chains);
        if rhat > 1.1 {
            flagged += 1;
        }
        // NaN-aware max/min: f64::max(NaN, x) returns x.
        max_rhat = max_rhat.max(rhat);
        min_ess = min_ess.min(ess);
        params.push(ParamSummary {
            name: names[j].clone(),
            mean: stats::mean(&pooled),
            sd: stats::sample_sd(&pooled),
            q5: stats::quantile_of(&pooled, 0.05),
            q95: stats::quantile_of(&pooled, 0.95),
            rhat,
            ess_bulk: ess,
        });
    }
    FitSummary {
        params,
        max_rhat,
        min_ess,
        total_divergences: draws.total_divergences(),
        rhat_flagged: flagged,
    }
}
