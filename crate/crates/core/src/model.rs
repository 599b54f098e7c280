//! The three production-capacity regressions as unconstrained-space log
//! posteriors with analytic gradients.
//!
//! All kinds share the normal likelihood `y_i ~ Normal(mu_i, sigma_Y)` on
//! standardized data, with scale parameters stored as logs:
//!
//! * spatial: `mu_i = alpha_b + beta_b * l_i`, with the block slopes tied
//!   together by the hierarchical prior
//!   `beta_b ~ Normal(gamma + delta * wbar_b, sigma_beta)`.
//! * spatio-temporal: `mu_i = alpha_b + tau_t + (gamma_t + delta_b * ebar_b) * l_i`,
//!   where the slope is a deterministic function of block and time effects.
//! * expanded:
//!   `mu_i = alpha_b + tau_t + (gamma_b * ewbar_b + delta_b * esbar_b + phi_t * ewbar_t + omega_t * esbar_t) * l_i`,
//!   separating water and sand intensities by block and by time.
//!
//! Time-indexed parameters carry first-order random-walk priors; scales carry
//! half-normal priors with the log-parameterization Jacobian included.
//!
//! Flat parameter layouts (versioned; see `LAYOUT_VERSION`):
//!
//! * spatial: `alpha[1..B], beta[1..B], gamma, delta, log_sigma_y, log_sigma_beta`
//! * spatio-temporal: `alpha[1..B], delta[1..B], tau[1..T], gamma_t[1..T], log_sigma_y`
//! * expanded: `alpha[1..B], gamma_b[1..B], delta_b[1..B], tau[1..T], phi[1..T],
//!   omega[1..T], log_sigma_y`

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::PreparedDataset;
use crate::stats::normal_log_density;

/// Version tag for the flat parameter layouts documented on this module.
pub const LAYOUT_VERSION: &str = "1";

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("parameter vector length {got} does not match layout dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dataset prepared for kind {data} cannot serve model kind {requested}")]
    KindMismatch {
        requested: ModelKind,
        data: ModelKind,
    },
    #[error("model kind {0} has no time-indexed parameters")]
    NoTimeParameters(ModelKind),
}

/// Which of the three regressions to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Spatial,
    SpatioTemporal,
    Expanded,
}

impl ModelKind {
    pub fn code(&self) -> &'static str {
        match self {
            ModelKind::Spatial => "spatial",
            ModelKind::SpatioTemporal => "spatio_temporal",
            ModelKind::Expanded => "expanded",
        }
    }

    pub fn has_time_parameters(&self) -> bool {
        !matches!(self, ModelKind::Spatial)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "a" | "spatial" => Ok(ModelKind::Spatial),
            "b" | "spatio_temporal" | "spatio-temporal" => Ok(ModelKind::SpatioTemporal),
            "c" | "expanded" => Ok(ModelKind::Expanded),
            other => Err(format!(
                "unknown model kind {other:?}: expected a/spatial, b/spatio_temporal, or c/expanded"
            )),
        }
    }
}

/// Prior scales. Location parameters and scale parameters default to sd 1
/// for the spatial kind and 0.5 for the others; random-walk increments use
/// sd 0.5 throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub scale_loc: f64,
    pub scale_walk: f64,
    pub scale_sigma: f64,
}

impl PriorConfig {
    pub fn defaults_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Spatial => PriorConfig {
                scale_loc: 1.0,
                scale_walk: 0.5,
                scale_sigma: 1.0,
            },
            _ => PriorConfig {
                scale_loc: 0.5,
                scale_walk: 0.5,
                scale_sigma: 0.5,
            },
        }
    }
}

/// Index layout of the flat unconstrained parameter vector for a kind at
/// given block and time counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub kind: ModelKind,
    pub b: usize,
    pub t: usize,
}

impl ParamLayout {
    pub fn new(kind: ModelKind, b: usize, t: usize) -> Self {
        ParamLayout { kind, b, t }
    }

    pub fn for_dataset(data: &PreparedDataset) -> Self {
        ParamLayout {
            kind: data.kind,
            b: data.b,
            t: data.t,
        }
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            ModelKind::Spatial => 2 * self.b + 4,
            ModelKind::SpatioTemporal => 2 * self.b + 2 * self.t + 1,
            ModelKind::Expanded => 3 * self.b + 3 * self.t + 1,
        }
    }

    pub fn alpha(&self) -> Range<usize> {
        0..self.b
    }

    /// Second block-indexed family: `beta` (spatial), `delta` (spatio-temporal),
    /// `gamma_b` (expanded).
    fn block2(&self) -> Range<usize> {
        self.b..2 * self.b
    }

    fn block3(&self) -> Range<usize> {
        2 * self.b..3 * self.b
    }

    pub fn tau(&self) -> Range<usize> {
        match self.kind {
            ModelKind::Spatial => unreachable!("spatial kind has no tau"),
            ModelKind::SpatioTemporal => 2 * self.b..2 * self.b + self.t,
            ModelKind::Expanded => 3 * self.b..3 * self.b + self.t,
        }
    }

    fn time2(&self) -> Range<usize> {
        let start = self.tau().end;
        start..start + self.t
    }

    fn time3(&self) -> Range<usize> {
        let start = self.time2().end;
        start..start + self.t
    }

    pub fn log_sigma_y(&self) -> usize {
        match self.kind {
            ModelKind::Spatial => 2 * self.b + 2,
            ModelKind::SpatioTemporal => 2 * self.b + 2 * self.t,
            ModelKind::Expanded => 3 * self.b + 3 * self.t,
        }
    }

    /// Column names in flat order, 1-indexed per family.
    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        let block = |family: &str, names: &mut Vec<String>| {
            for i in 1..=self.b {
                names.push(format!("{family}[{i}]"));
            }
        };
        let time = |family: &str, names: &mut Vec<String>| {
            for j in 1..=self.t {
                names.push(format!("{family}[{j}]"));
            }
        };
        match self.kind {
            ModelKind::Spatial => {
                block("alpha", &mut names);
                block("beta", &mut names);
                names.push("gamma".to_string());
                names.push("delta".to_string());
                names.push("log_sigma_y".to_string());
                names.push("log_sigma_beta".to_string());
            }
            ModelKind::SpatioTemporal => {
                block("alpha", &mut names);
                block("delta", &mut names);
                time("tau", &mut names);
                time("gamma_t", &mut names);
                names.push("log_sigma_y".to_string());
            }
            ModelKind::Expanded => {
                block("alpha", &mut names);
                block("gamma_b", &mut names);
                block("delta_b", &mut names);
                time("tau", &mut names);
                time("phi", &mut names);
                time("omega", &mut names);
                names.push("log_sigma_y".to_string());
            }
        }
        names
    }
}

fn check(
    kind: ModelKind,
    params: &[f64],
    data: &PreparedDataset,
) -> Result<ParamLayout, ModelError> {
    if data.kind != kind {
        return Err(ModelError::KindMismatch {
            requested: kind,
            data: data.kind,
        });
    }
    let layout = ParamLayout::for_dataset(data);
    if params.len() != layout.dim() {
        return Err(ModelError::DimensionMismatch {
            expected: layout.dim(),
            got: params.len(),
        });
    }
    Ok(layout)
}

/// Per-well predictive means on the standardized scale.
pub fn predict_mean(
    kind: ModelKind,
    params: &[f64],
    data: &PreparedDataset,
) -> Result<Vec<f64>, ModelError> {
    let layout = check(kind, params, data)?;
    let mut mu = Vec::with_capacity(data.n);
    match kind {
        ModelKind::Spatial => {
            let alpha = &params[layout.alpha()];
            let beta = &params[layout.block2()];
            for i in 0..data.n {
                let bi = data.block_of[i];
                mu.push(alpha[bi] + beta[bi] * data.l[i]);
            }
        }
        ModelKind::SpatioTemporal => {
            let alpha = &params[layout.alpha()];
            let delta = &params[layout.block2()];
            let tau = &params[layout.tau()];
            let gamma_t = &params[layout.time2()];
            for i in 0..data.n {
                let bi = data.block_of[i];
                let ti = data.time_of[i];
                let slope = gamma_t[ti] + delta[bi] * data.e_bar_b[bi];
                mu.push(alpha[bi] + tau[ti] + slope * data.l[i]);
            }
        }
        ModelKind::Expanded => {
            let alpha = &params[layout.alpha()];
            let gamma_b = &params[layout.block2()];
            let delta_b = &params[layout.block3()];
            let tau = &params[layout.tau()];
            let phi = &params[layout.time2()];
            let omega = &params[layout.time3()];
            for i in 0..data.n {
                let bi = data.block_of[i];
                let ti = data.time_of[i];
                let slope = gamma_b[bi] * data.ew_bar_b[bi]
                    + delta_b[bi] * data.es_bar_b[bi]
                    + phi[ti] * data.ew_bar_t[ti]
                    + omega[ti] * data.es_bar_t[ti];
                mu.push(alpha[bi] + tau[ti] + slope * data.l[i]);
            }
        }
    }
    Ok(mu)
}

/// Sum of normal log densities of the observations around their predictive
/// means, sd parameterization.
pub fn log_likelihood(
    kind: ModelKind,
    params: &[f64],
    data: &PreparedDataset,
) -> Result<f64, ModelError> {
    let layout = check(kind, params, data)?;
    let mu = predict_mean(kind, params, data)?;
    let sigma = params[layout.log_sigma_y()].exp();
    let mut total = 0.0;
    for i in 0..data.n {
        total += normal_log_density(data.y[i], mu[i], sigma);
    }
    Ok(total)
}

fn normal0(x: f64, sd: f64) -> f64 {
    normal_log_density(x, 0.0, sd)
}

/// First-order random walk: an initial Normal(0, s) plus Normal(previous, s)
/// increments.
fn random_walk_log_prior(path: &[f64], sd: f64) -> f64 {
    let mut total = 0.0;
    let mut prev = 0.0;
    for &x in path {
        total += normal0(x - prev, sd);
        prev = x;
    }
    total
}

/// Half-normal prior on sigma = exp(theta), including the +theta Jacobian of
/// the log parameterization.
fn half_normal_log_prior(theta: f64, sd: f64) -> f64 {
    let sigma = theta.exp();
    std::f64::consts::LN_2 + normal0(sigma, sd) + theta
}

/// Joint log prior of the unconstrained parameter vector.
pub fn log_prior(
    kind: ModelKind,
    params: &[f64],
    data: &PreparedDataset,
    prior: &PriorConfig,
) -> Result<f64, ModelError> {
    let layout = check(kind, params, data)?;
    let mut total = 0.0;
    match kind {
        ModelKind::Spatial => {
            let alpha = &params[layout.alpha()];
            let beta = &params[layout.block2()];
            let gamma = params[2 * layout.b];
            let delta = params[2 * layout.b + 1];
            let log_sigma_beta = params[2 * layout.b + 3];
            let sigma_beta = log_sigma_beta.exp();
            for &a in alpha {
                total += normal0(a, prior.scale_loc);
            }
            for (bi, &bb) in beta.iter().enumerate() {
                let center = gamma + delta * data.w_bar_b[bi];
                total += normal_log_density(bb, center, sigma_beta);
            }
            total += normal0(gamma, prior.scale_loc);
            total += normal0(delta, prior.scale_loc);
            total += half_normal_log_prior(params[layout.log_sigma_y()], prior.scale_sigma);
            total += half_normal_log_prior(log_sigma_beta, prior.scale_sigma);
        }
        ModelKind::SpatioTemporal => {
            for &a in &params[layout.alpha()] {
                total += normal0(a, prior.scale_loc);
            }
            for &d in &params[layout.block2()] {
                total += normal0(d, prior.scale_loc);
            }
            total += random_walk_log_prior(&params[layout.tau()], prior.scale_walk);
            total += random_walk_log_prior(&params[layout.time2()], prior.scale_walk);
            total += half_normal_log_prior(params[layout.log_sigma_y()], prior.scale_sigma);
        }
        ModelKind::Expanded => {
            for range in [layout.alpha(), layout.block2(), layout.block3()] {
                for &v in &params[range] {
                    total += normal0(v, prior.scale_loc);
                }
            }
            for range in [layout.tau(), layout.time2(), layout.time3()] {
                total += random_walk_log_prior(&params[range], prior.scale_walk);
            }
            total += half_normal_log_prior(params[layout.log_sigma_y()], prior.scale_sigma);
        }
    }
    Ok(total)
}

/// Log posterior up to a constant: likelihood plus prior.
pub fn log_posterior(
    kind: ModelKind,
    params: &[f64],
    data: &PreparedDataset,
    prior: &PriorConfig,
) -> Result<f64, ModelError> {
    Ok(log_likelihood(kind, params, data)? + log_prior(kind, params, data, prior)?)
}

fn random_walk_grad(path: &[f64], sd: f64, grad: &mut [f64]) {
    let inv_var = 1.0 / (sd * sd);
    let t = path.len();
    for i in 0..t {
        let prev = if i == 0 { 0.0 } else { path[i - 1] };
        grad[i] -= (path[i] - prev) * inv_var;
        if i + 1 < t {
            grad[i] += (path[i + 1] - path[i]) * inv_var;
        }
    }
}

/// Exact gradient of [`log_posterior`] in unconstrained space.
pub fn grad_log_posterior(
    kind: ModelKind,
    params: &[f64],
    data: &PreparedDataset,
    prior: &PriorConfig,
) -> Result<Vec<f64>, ModelError> {
    let layout = check(kind, params, data)?;
    let mu = predict_mean(kind, params, data)?;
    let lsy = layout.log_sigma_y();
    let sigma = params[lsy].exp();
    let inv_var = 1.0 / (sigma * sigma);
    let inv_loc_var = 1.0 / (prior.scale_loc * prior.scale_loc);
    let inv_sigma_var = 1.0 / (prior.scale_sigma * prior.scale_sigma);

    let mut grad = vec![0.0; layout.dim()];

    // Likelihood contributions through mu and sigma_Y.
    let mut sigma_grad = 0.0;
    for i in 0..data.n {
        let r = data.y[i] - mu[i];
        let c = r * inv_var;
        sigma_grad += -1.0 + r * r * inv_var;
        match kind {
            ModelKind::Spatial => {
                let bi = data.block_of[i];
                grad[bi] += c;
                grad[layout.b + bi] += c * data.l[i];
            }
            ModelKind::SpatioTemporal => {
                let bi = data.block_of[i];
                let ti = data.time_of[i];
                grad[bi] += c;
                grad[layout.b + bi] += c * data.e_bar_b[bi] * data.l[i];
                grad[layout.tau().start + ti] += c;
                grad[layout.time2().start + ti] += c * data.l[i];
            }
            ModelKind::Expanded => {
                let bi = data.block_of[i];
                let ti = data.time_of[i];
                let cl = c * data.l[i];
                grad[bi] += c;
                grad[layout.block2().start + bi] += cl * data.ew_bar_b[bi];
                grad[layout.block3().start + bi] += cl * data.es_bar_b[bi];
                grad[layout.tau().start + ti] += c;
                grad[layout.time2().start + ti] += cl * data.ew_bar_t[ti];
                grad[layout.time3().start + ti] += cl * data.es_bar_t[ti];
            }
        }
    }
    grad[lsy] += sigma_grad;
    // Half-normal prior on sigma_Y plus Jacobian.
    grad[lsy] += 1.0 - sigma * sigma * inv_sigma_var;

    match kind {
        ModelKind::Spatial => {
            let b = layout.b;
            let gamma = params[2 * b];
            let delta = params[2 * b + 1];
            let lsb = params[2 * b + 3];
            let sigma_beta = lsb.exp();
            let inv_beta_var = 1.0 / (sigma_beta * sigma_beta);
            let mut gamma_grad = 0.0;
            let mut delta_grad = 0.0;
            let mut lsb_grad = 0.0;
            for bi in 0..b {
                grad[bi] -= params[bi] * inv_loc_var;
                let resid = params[b + bi] - gamma - delta * data.w_bar_b[bi];
                grad[b + bi] -= resid * inv_beta_var;
                gamma_grad += resid * inv_beta_var;
                delta_grad += resid * data.w_bar_b[bi] * inv_beta_var;
                lsb_grad += -1.0 + resid * resid * inv_beta_var;
            }
            grad[2 * b] += gamma_grad - gamma * inv_loc_var;
            grad[2 * b + 1] += delta_grad - delta * inv_loc_var;
            grad[2 * b + 3] += lsb_grad + 1.0 - sigma_beta * sigma_beta * inv_sigma_var;
        }
        ModelKind::SpatioTemporal => {
            for idx in layout.alpha().chain(layout.block2()) {
                grad[idx] -= params[idx] * inv_loc_var;
            }
            random_walk_grad(
                &params[layout.tau()],
                prior.scale_walk,
                &mut grad[layout.tau()],
            );
            random_walk_grad(
                &params[layout.time2()],
                prior.scale_walk,
                &mut grad[layout.time2()],
            );
        }
        ModelKind::Expanded => {
            for idx in layout.alpha().chain(layout.block2()).chain(layout.block3()) {
                grad[idx] -= params[idx] * inv_loc_var;
            }
            for range in [layout.tau(), layout.time2(), layout.time3()] {
                random_walk_grad(&params[range.clone()], prior.scale_walk, &mut grad[range]);
            }
        }
    }
    Ok(grad)
}

/// One replicated outcome vector drawn from the likelihood at the given
/// parameters, standardized scale.
pub fn posterior_predictive_draw<R: Rng + ?Sized>(
    kind: ModelKind,
    params: &[f64],
    data: &PreparedDataset,
    rng: &mut R,
) -> Result<Vec<f64>, ModelError> {
    let layout = check(kind, params, data)?;
    let mu = predict_mean(kind, params, data)?;
    let sigma = params[layout.log_sigma_y()].exp();
    Ok(mu
        .into_iter()
        .map(|m| {
            let z: f64 = rng.sample(StandardNormal);
            m + sigma * z
        })
        .collect())
}

/// The spatio-temporal kind's derived slope surface `beta[b,t] = gamma_t +
/// delta_b * ebar_b`, row-major over blocks then times.
pub fn derived_beta_bt(params: &[f64], data: &PreparedDataset) -> Result<Vec<f64>, ModelError> {
    let layout = check(ModelKind::SpatioTemporal, params, data)?;
    let delta = &params[layout.block2()];
    let gamma_t = &params[layout.time2()];
    let mut beta = Vec::with_capacity(data.b * data.t);
    for bi in 0..data.b {
        for ti in 0..data.t {
            beta.push(gamma_t[ti] + delta[bi] * data.e_bar_b[bi]);
        }
    }
    Ok(beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{PipelinePolicy, PreparedDataset, Standardizer, Standardizers};
    use crate::sim::random_prepared_dataset;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Minimal hand-built dataset: one block, one period, given y and l.
    fn tiny_dataset(kind: ModelKind, y: Vec<f64>, l: Vec<f64>) -> PreparedDataset {
        let n = y.len();
        let std = Standardizer {
            mean: 0.0,
            sd: 1.0,
            k: 1,
        };
        PreparedDataset {
            kind,
            policy: PipelinePolicy::defaults_for(kind),
            n,
            b: 1,
            t: 1,
            y,
            l,
            e: vec![],
            ew: vec![],
            es: vec![],
            block_of: vec![0; n],
            time_of: vec![0; n],
            n_per_block: vec![n],
            n_per_time: vec![n],
            e_bar_b: if kind == ModelKind::SpatioTemporal {
                vec![0.0]
            } else {
                vec![]
            },
            ew_bar_b: if kind == ModelKind::Expanded {
                vec![0.0]
            } else {
                vec![]
            },
            es_bar_b: if kind == ModelKind::Expanded {
                vec![0.0]
            } else {
                vec![]
            },
            ew_bar_t: if kind == ModelKind::Expanded {
                vec![0.0]
            } else {
                vec![]
            },
            es_bar_t: if kind == ModelKind::Expanded {
                vec![0.0]
            } else {
                vec![]
            },
            w_bar_b: if kind == ModelKind::Spatial {
                vec![0.0]
            } else {
                vec![]
            },
            standardizers: Standardizers {
                y: std,
                l: std,
                e: None,
                ew: None,
                es: None,
                w: None,
            },
            block_codes: vec!["DN87aa".parse().unwrap()],
            time_labels: vec![crate::dataset::Period::Year(2015)],
        }
    }

    #[test]
    fn layout_dimensions() {
        assert_eq!(ParamLayout::new(ModelKind::Spatial, 5, 1).dim(), 14);
        assert_eq!(ParamLayout::new(ModelKind::SpatioTemporal, 5, 4).dim(), 19);
        assert_eq!(ParamLayout::new(ModelKind::Expanded, 5, 4).dim(), 28);
    }

    #[test]
    fn layout_names_match_dim_and_format() {
        let layout = ParamLayout::new(ModelKind::SpatioTemporal, 3, 2);
        let names = layout.names();
        assert_eq!(names.len(), layout.dim());
        assert_eq!(names[0], "alpha[1]");
        assert_eq!(names[3], "delta[1]");
        assert_eq!(names[6], "tau[1]");
        assert_eq!(names[8], "gamma_t[1]");
        assert_eq!(*names.last().unwrap(), "log_sigma_y");
    }

    #[test]
    fn likelihood_standard_normal_point() {
        let data = tiny_dataset(ModelKind::Spatial, vec![0.0], vec![0.0]);
        let params = vec![0.0; ParamLayout::for_dataset(&data).dim()];
        let ll = log_likelihood(ModelKind::Spatial, &params, &data).unwrap();
        assert!((ll - (-0.9189385332046727)).abs() < 1e-12);

        let two = tiny_dataset(ModelKind::Spatial, vec![0.0, 0.0], vec![0.0, 0.0]);
        let ll2 = log_likelihood(ModelKind::Spatial, &params, &two).unwrap();
        assert!((ll2 - (-1.8378770664093453)).abs() < 1e-12);
    }

    /// Independent density-formula oracle: per-well normal log densities
    /// computed from the written-out mean expressions and summed with
    /// compensated (Kahan) accumulation.
    fn oracle_log_likelihood(kind: ModelKind, params: &[f64], data: &PreparedDataset) -> f64 {
        let layout = ParamLayout::for_dataset(data);
        let sigma = params[layout.log_sigma_y()].exp();
        let mut sum = 0.0;
        let mut comp = 0.0;
        for i in 0..data.n {
            let bi = data.block_of[i];
            let ti = data.time_of[i];
            let mu = match kind {
                ModelKind::Spatial => params[bi] + params[data.b + bi] * data.l[i],
                ModelKind::SpatioTemporal => {
                    params[bi]
                        + params[2 * data.b + ti]
                        + (params[2 * data.b + data.t + ti]
                            + params[data.b + bi] * data.e_bar_b[bi])
                            * data.l[i]
                }
                ModelKind::Expanded => {
                    params[bi]
                        + params[3 * data.b + ti]
                        + (params[data.b + bi] * data.ew_bar_b[bi]
                            + params[2 * data.b + bi] * data.es_bar_b[bi]
                            + params[3 * data.b + data.t + ti] * data.ew_bar_t[ti]
                            + params[3 * data.b + 2 * data.t + ti] * data.es_bar_t[ti])
                            * data.l[i]
                }
            };
            let z = (data.y[i] - mu) / sigma;
            let term = -0.5 * (2.0 * std::f64::consts::PI).ln() - sigma.ln() - 0.5 * z * z;
            let t = sum + (term - comp);
            comp = (t - sum) - (term - comp);
            sum = t;
        }
        sum
    }

    fn random_params(layout: &ParamLayout, rng: &mut impl Rng) -> Vec<f64> {
        (0..layout.dim())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect()
    }

    #[test]
    fn likelihood_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kind in [
            ModelKind::Spatial,
            ModelKind::SpatioTemporal,
            ModelKind::Expanded,
        ] {
            let data = random_prepared_dataset(kind, 4, 3, 40, 99);
            let layout = ParamLayout::for_dataset(&data);
            for _ in 0..20 {
                let params = random_params(&layout, &mut rng);
                let got = log_likelihood(kind, &params, &data).unwrap();
                let want = oracle_log_likelihood(kind, &params, &data);
                assert!(
                    (got - want).abs() <= 1e-12 * want.abs().max(1.0),
                    "{kind}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn prior_at_origin_matches_term_by_term_evaluation() {
        // Spatio-temporal kind with B = T = 1, all parameters zero: four
        // Normal(0, 0.5) log densities at zero, plus the half-normal term at
        // sigma = 1 with a zero Jacobian contribution.
        let data = tiny_dataset(ModelKind::SpatioTemporal, vec![0.0], vec![0.0]);
        let prior = PriorConfig::defaults_for(ModelKind::SpatioTemporal);
        let params = vec![0.0; 5];
        let got = log_prior(ModelKind::SpatioTemporal, &params, &data, &prior).unwrap();

        let ln_norm_half = -(0.5 * (2.0 * std::f64::consts::PI).sqrt()).ln();
        let want =
            4.0 * ln_norm_half + std::f64::consts::LN_2 + (ln_norm_half - 1.0 / (2.0 * 0.25));
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn random_walk_prior_of_constant_path() {
        let s = 0.5;
        let c = 0.37;
        let t = 6;
        let path = vec![c; t];
        let got = random_walk_log_prior(&path, s);
        let want = normal0(c, s) + (t - 1) as f64 * normal0(0.0, s);
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn posterior_is_likelihood_plus_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = random_prepared_dataset(ModelKind::SpatioTemporal, 5, 4, 50, 12);
        let prior = PriorConfig::defaults_for(ModelKind::SpatioTemporal);
        let layout = ParamLayout::for_dataset(&data);
        for _ in 0..10 {
            let params = random_params(&layout, &mut rng);
            let lp = log_posterior(ModelKind::SpatioTemporal, &params, &data, &prior).unwrap();
            let ll = log_likelihood(ModelKind::SpatioTemporal, &params, &data).unwrap();
            let pr = log_prior(ModelKind::SpatioTemporal, &params, &data, &prior).unwrap();
            assert!((lp - (ll + pr)).abs() < 1e-12 * lp.abs().max(1.0));
        }
    }

    #[test]
    fn posterior_finite_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for kind in [
            ModelKind::Spatial,
            ModelKind::SpatioTemporal,
            ModelKind::Expanded,
        ] {
            let data = random_prepared_dataset(kind, 5, 4, 50, 31);
            let prior = PriorConfig::defaults_for(kind);
            let layout = ParamLayout::for_dataset(&data);
            for _ in 0..1000 {
                let params = random_params(&layout, &mut rng);
                let lp = log_posterior(kind, &params, &data, &prior).unwrap();
                assert!(lp.is_finite(), "{kind} produced non-finite log posterior");
            }
        }
    }

    #[test]
    fn posterior_invariant_under_well_permutation() {
        let data = random_prepared_dataset(ModelKind::Expanded, 4, 3, 30, 8);
        let prior = PriorConfig::defaults_for(ModelKind::Expanded);
        let layout = ParamLayout::for_dataset(&data);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = random_params(&layout, &mut rng);
        let before = log_posterior(ModelKind::Expanded, &params, &data, &prior).unwrap();

        let mut shuffled = data.clone();
        let perm: Vec<usize> = (0..data.n).rev().collect();
        shuffled.y = perm.iter().map(|&i| data.y[i]).collect();
        shuffled.l = perm.iter().map(|&i| data.l[i]).collect();
        shuffled.block_of = perm.iter().map(|&i| data.block_of[i]).collect();
        shuffled.time_of = perm.iter().map(|&i| data.time_of[i]).collect();
        let after = log_posterior(ModelKind::Expanded, &params, &shuffled, &prior).unwrap();
        assert!((before - after).abs() < 1e-9 * before.abs().max(1.0));
    }

    fn central_fd_gradient(
        kind: ModelKind,
        params: &[f64],
        data: &PreparedDataset,
        prior: &PriorConfig,
        step: f64,
    ) -> Vec<f64> {
        let mut fd = vec![0.0; params.len()];
        let mut work = params.to_vec();
        for j in 0..params.len() {
            work[j] = params[j] + step;
            let hi = log_posterior(kind, &work, data, prior).unwrap();
            work[j] = params[j] - step;
            let lo = log_posterior(kind, &work, data, prior).unwrap();
            work[j] = params[j];
            fd[j] = (hi - lo) / (2.0 * step);
        }
        fd
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for kind in [
            ModelKind::Spatial,
            ModelKind::SpatioTemporal,
            ModelKind::Expanded,
        ] {
            let data = random_prepared_dataset(kind, 5, 4, 50, 64);
            let prior = PriorConfig::defaults_for(kind);
            let layout = ParamLayout::for_dataset(&data);
            for _ in 0..10 {
                let params = random_params(&layout, &mut rng);
                let grad = grad_log_posterior(kind, &params, &data, &prior).unwrap();
                let fd = central_fd_gradient(kind, &params, &data, &prior, 1e-5);
                for j in 0..grad.len() {
                    let denom = grad[j].abs().max(fd[j].abs()).max(1.0);
                    assert!(
                        (grad[j] - fd[j]).abs() / denom <= 1e-6,
                        "{kind} coord {j}: {} vs {}",
                        grad[j],
                        fd[j]
                    );
                }
            }
        }
    }

    #[test]
    fn gradient_zero_at_prior_mode_with_no_data() {
        for kind in [
            ModelKind::Spatial,
            ModelKind::SpatioTemporal,
            ModelKind::Expanded,
        ] {
            let mut data = random_prepared_dataset(kind, 3, 2, 10, 4);
            data.n = 0;
            data.y.clear();
            data.l.clear();
            data.block_of.clear();
            data.time_of.clear();
            let prior = PriorConfig::defaults_for(kind);
            let layout = ParamLayout::for_dataset(&data);
            let params = vec![0.0; layout.dim()];
            let grad = grad_log_posterior(kind, &params, &data, &prior).unwrap();
            let lsy = layout.log_sigma_y();
            for (j, g) in grad.iter().enumerate() {
                let is_scale = j == lsy || (kind == ModelKind::Spatial && j == layout.dim() - 1);
                if !is_scale {
                    assert!(g.abs() < 1e-14, "{kind} location coord {j} gradient {g}");
                }
            }
        }
    }

    #[test]
    fn gradient_of_untouched_block_is_prior_only() {
        // All wells in block 0; block 1 exists but is empty.
        let mut data = tiny_dataset(ModelKind::SpatioTemporal, vec![0.5, -0.2], vec![0.1, 0.3]);
        data.b = 2;
        data.n_per_block = vec![2, 0];
        data.e_bar_b = vec![0.4, 0.2];
        data.block_codes = vec!["DN87aa".parse().unwrap(), "DN87ab".parse().unwrap()];
        let prior = PriorConfig::defaults_for(ModelKind::SpatioTemporal);
        let layout = ParamLayout::for_dataset(&data);
        let mut params = vec![0.0; layout.dim()];
        params[1] = 0.7; // alpha of the empty block
        let grad = grad_log_posterior(ModelKind::SpatioTemporal, &params, &data, &prior).unwrap();
        let expected = -0.7 / (prior.scale_loc * prior.scale_loc);
        assert!((grad[1] - expected).abs() < 1e-14);
    }

    #[test]
    fn predict_mean_zero_params() {
        let data = random_prepared_dataset(ModelKind::Expanded, 4, 3, 25, 51);
        let params = vec![0.0; ParamLayout::for_dataset(&data).dim()];
        let mu = predict_mean(ModelKind::Expanded, &params, &data).unwrap();
        assert!(mu.iter().all(|m| *m == 0.0));
    }

    #[test]
    fn predict_mean_slope_vanishes_at_zero_lateral() {
        let mut data = tiny_dataset(ModelKind::SpatioTemporal, vec![1.0], vec![0.0]);
        data.e_bar_b = vec![0.9];
        let params = vec![0.3, 0.8, -0.4, 0.6, 0.0]; // alpha, delta, tau, gamma_t, lsy
        let mu = predict_mean(ModelKind::SpatioTemporal, &params, &data).unwrap();
        assert!((mu[0] - (0.3 - 0.4)).abs() < 1e-15);
    }

    #[test]
    fn predict_mean_matches_regrouped_form() {
        // alpha_b + tau_t + (gamma_t + delta_b ebar_b) l regrouped as
        // [alpha_b + delta_b ebar_b l] + [tau_t + gamma_t l].
        let data = random_prepared_dataset(ModelKind::SpatioTemporal, 5, 4, 40, 17);
        let layout = ParamLayout::for_dataset(&data);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = random_params(&layout, &mut rng);
        let mu = predict_mean(ModelKind::SpatioTemporal, &params, &data).unwrap();
        for i in 0..data.n {
            let bi = data.block_of[i];
            let ti = data.time_of[i];
            let spatial = params[bi] + params[data.b + bi] * data.e_bar_b[bi] * data.l[i];
            let temporal = params[2 * data.b + ti] + params[2 * data.b + data.t + ti] * data.l[i];
            assert!((mu[i] - (spatial + temporal)).abs() < 1e-12);
        }
    }

    #[test]
    fn derived_beta_surface_reproduces_mean() {
        let data = random_prepared_dataset(ModelKind::SpatioTemporal, 5, 4, 40, 18);
        let layout = ParamLayout::for_dataset(&data);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = random_params(&layout, &mut rng);
        let beta = derived_beta_bt(&params, &data).unwrap();
        let mu = predict_mean(ModelKind::SpatioTemporal, &params, &data).unwrap();
        for i in 0..data.n {
            let bi = data.block_of[i];
            let ti = data.time_of[i];
            let rebuilt = params[bi] + params[2 * data.b + ti] + beta[bi * data.t + ti] * data.l[i];
            assert!((mu[i] - rebuilt).abs() < 1e-12);
        }
    }

    #[test]
    fn likelihood_translation_consistency() {
        // Shifting every y and every alpha by the same constant leaves the
        // likelihood unchanged: the slope structure is untouched.
        for kind in [
            ModelKind::Spatial,
            ModelKind::SpatioTemporal,
            ModelKind::Expanded,
        ] {
            let data = random_prepared_dataset(kind, 4, 3, 30, 23);
            let layout = ParamLayout::for_dataset(&data);
            let mut rng = ChaCha8Rng::seed_from_u64(14);
            let params = random_params(&layout, &mut rng);
            let base = log_likelihood(kind, &params, &data).unwrap();

            let c = 0.8;
            let mut shifted_data = data.clone();
            for y in shifted_data.y.iter_mut() {
                *y += c;
            }
            let mut shifted_params = params.clone();
            for a in shifted_params[layout.alpha()].iter_mut() {
                *a += c;
            }
            let shifted = log_likelihood(kind, &shifted_params, &shifted_data).unwrap();
            assert!(
                (base - shifted).abs() < 1e-9 * base.abs().max(1.0),
                "{kind}"
            );
        }
    }

    #[test]
    fn predictive_draw_degenerates_to_mean() {
        let data = random_prepared_dataset(ModelKind::SpatioTemporal, 3, 2, 20, 6);
        let layout = ParamLayout::for_dataset(&data);
        let mut params = vec![0.2; layout.dim()];
        params[layout.log_sigma_y()] = -30.0;
        let mu = predict_mean(ModelKind::SpatioTemporal, &params, &data).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let draw =
            posterior_predictive_draw(ModelKind::SpatioTemporal, &params, &data, &mut rng).unwrap();
        for (d, m) in draw.iter().zip(&mu) {
            assert!((d - m).abs() < 1e-6);
        }
    }

    #[test]
    fn predictive_draw_is_seed_deterministic() {
        let data = random_prepared_dataset(ModelKind::Spatial, 3, 1, 20, 6);
        let layout = ParamLayout::for_dataset(&data);
        let params = vec![0.1; layout.dim()];
        let mut rng1 = ChaCha8Rng::seed_from_u64(42);
        let mut rng2 = ChaCha8Rng::seed_from_u64(42);
        let a = posterior_predictive_draw(ModelKind::Spatial, &params, &data, &mut rng1).unwrap();
        let b = posterior_predictive_draw(ModelKind::Spatial, &params, &data, &mut rng2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn predictive_draw_spread_matches_sigma() {
        let data = tiny_dataset(ModelKind::Spatial, vec![0.0], vec![0.0]);
        let layout = ParamLayout::for_dataset(&data);
        let params = vec![0.0; layout.dim()]; // sigma_Y = 1
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let draws: Vec<f64> = (0..10_000)
            .map(|_| {
                posterior_predictive_draw(ModelKind::Spatial, &params, &data, &mut rng).unwrap()[0]
            })
            .collect();
        let sd = crate::stats::sample_sd(&draws);
        assert!((sd - 1.0).abs() < 0.03, "sd {sd}");
    }

    #[test]
    fn dimension_and_kind_mismatches_error() {
        let data = tiny_dataset(ModelKind::Spatial, vec![0.0], vec![0.0]);
        let short = vec![0.0; 3];
        assert!(matches!(
            log_likelihood(ModelKind::Spatial, &short, &data),
            Err(ModelError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            log_likelihood(ModelKind::SpatioTemporal, &short, &data),
            Err(ModelError::KindMismatch { .. })
        ));
    }
}
