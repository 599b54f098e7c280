//! Bayesian small-area estimation of well production capacities.
//!
//! Wells are grouped into Maidenhead grid cells and calendar periods, run
//! through a standardization pipeline, and fit with gradient-based MCMC
//! (NUTS) under one of three multilevel regression variants. Reports turn
//! posterior draws into block-by-time capacity tables, posterior predictive
//! checks, and time-parameter trajectories.

// The numeric kernels index several parallel vectors per iteration.
#![allow(clippy::needless_range_loop)]

pub mod dataset;
pub mod grid;
pub mod model;
pub mod report;
pub mod sampler;
pub mod sim;
pub mod stats;

pub use dataset::{PipelinePolicy, PreparedDataset, WellRecord};
pub use grid::{Locator4, Locator6};
pub use model::{ModelKind, ParamLayout, PriorConfig};
pub use sampler::{PosteriorDraws, SamplerConfig};
