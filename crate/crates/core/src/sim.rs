//! Synthetic well data: model-consistent simulation for parameter-recovery
//! testing, plus quick random design fixtures.
//!
//! `simulate` draws covariates, builds the design exactly as the pipeline
//! would, draws outcomes from the model likelihood, and records the true
//! parameters *on the standardized scale of the emitted dataset*, so a
//! later preprocess-and-fit run can be compared against them directly.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    self, PipelinePolicy, PreparedDataset, Standardizer, Standardizers, WellDate, WellRecord,
    WellType,
};
use crate::grid::{self, Locator6};
use crate::model::{self, ModelKind, ParamLayout, PriorConfig};
use crate::stats;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(
        "need wells >= max(blocks, times) and >= 2: wells={wells}, blocks={blocks}, times={times}"
    )]
    TooFewWells {
        wells: usize,
        blocks: usize,
        times: usize,
    },
    #[error("fixed truth has wrong length: expected {expected}, got {got}")]
    BadTruthLength { expected: usize, got: usize },
    #[error(transparent)]
    Dataset(#[from] dataset::DatasetError),
    #[error(transparent)]
    Model(#[from] model::ModelError),
}

/// Simulation dimensions and covariate distributions. Covariates are
/// log-normal, matching the right-skew of the real variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub kind: ModelKind,
    pub blocks: usize,
    pub times: usize,
    pub wells: usize,
    pub seed: u64,
    /// Log-normal sd of the per-cell well-count weights; larger values make
    /// more cells sparse or empty.
    pub cell_weight_sigma: f64,
    pub base_year: i32,
    pub log_lateral_mean: f64,
    pub log_lateral_sd: f64,
    pub log_water_mean: f64,
    pub log_water_sd: f64,
    pub log_sand_mean: f64,
    pub log_sand_sd: f64,
    /// Fixed generation-scale truth; when absent, truths are drawn from the
    /// model priors with block and time intercepts centered.
    pub truth_params: Option<Vec<f64>>,
}

impl SimConfig {
    pub fn new(kind: ModelKind, blocks: usize, times: usize, wells: usize, seed: u64) -> Self {
        SimConfig {
            kind,
            blocks,
            times,
            wells,
            seed,
            cell_weight_sigma: 1.0,
            base_year: 2015,
            log_lateral_mean: 9.15,
            log_lateral_sd: 0.18,
            log_water_mean: 15.4,
            log_water_sd: 0.35,
            log_sand_mean: 14.9,
            log_sand_sd: 0.4,
            truth_params: None,
        }
    }
}

/// True parameters behind a simulated dataset, on the standardized scale of
/// the emitted CSV under the default policy for the kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub kind: ModelKind,
    pub b: usize,
    pub t: usize,
    pub n: usize,
    pub seed: u64,
    pub param_names: Vec<String>,
    pub params: Vec<f64>,
    pub sigma_y: f64,
    /// Block codes in dense index order (lexicographic), aligning the cell
    /// arrays below with a preprocessed dataset.
    pub block_codes: Vec<Locator6>,
    /// Wells per block-time cell, row-major over blocks then times.
    pub cell_counts: Vec<usize>,
    /// True mean outcome per cell on the standardized scale; `None` where the
    /// cell holds no wells.
    pub cell_mean_std: Vec<Option<f64>>,
}

impl SyntheticTruth {
    pub fn save_json(&self, path: &std::path::Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(path, json + "\n")
    }

    pub fn load_json(path: &std::path::Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub records: Vec<WellRecord>,
    pub truth: SyntheticTruth,
}

/// Consecutive locator codes walking fine cells east then north from a
/// Bakken-area base cell.
pub fn locator_sequence(count: usize) -> Vec<Locator6> {
    // Fine-cell indices of DN87aa: lon field D, square 8; lat field N, square 7.
    const BASE_LON_FINE: u32 = 3 * 240 + 8 * 24;
    const BASE_LAT_FINE: u32 = 13 * 240 + 7 * 24;
    (0..count)
        .map(|k| {
            let lon_fine = BASE_LON_FINE + (k % 24) as u32;
            let lat_fine = BASE_LAT_FINE + (k / 24) as u32;
            let lon = -180.0 + (f64::from(lon_fine) + 0.5) / 12.0;
            let lat = -90.0 + (f64::from(lat_fine) + 0.5) / 24.0;
            grid::encode_locator(lat, lon).expect("sequence stays in range")
        })
        .collect()
}

fn draw_normal(rng: &mut impl Rng, sd: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z * sd
}

/// Draw generation-scale truths from the model priors, centering the block
/// and time intercept families so the generated outcome stays near mean zero.
fn draw_truth(
    kind: ModelKind,
    layout: &ParamLayout,
    design: &PreparedDataset,
    prior: &PriorConfig,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let mut params = vec![0.0; layout.dim()];
    let center = |family: &mut [f64]| {
        let m = stats::mean(family);
        for v in family.iter_mut() {
            *v -= m;
        }
    };

    for v in params[layout.alpha()].iter_mut() {
        *v = draw_normal(rng, prior.scale_loc);
    }
    center(&mut params[layout.alpha()]);

    match kind {
        ModelKind::Spatial => {
            let b = layout.b;
            let gamma = draw_normal(rng, prior.scale_loc);
            let delta = draw_normal(rng, prior.scale_loc);
            let sigma_beta = draw_normal(rng, prior.scale_sigma).abs().max(0.05);
            for bi in 0..b {
                params[b + bi] = gamma + delta * design.w_bar_b[bi] + draw_normal(rng, sigma_beta);
            }
            params[2 * b] = gamma;
            params[2 * b + 1] = delta;
            params[2 * b + 3] = sigma_beta.ln();
        }
        ModelKind::SpatioTemporal => {
            for bi in layout.b..2 * layout.b {
                params[bi] = draw_normal(rng, prior.scale_loc);
            }
            let mut walk = 0.0;
            for ti in layout.tau() {
                walk += draw_normal(rng, prior.scale_walk);
                params[ti] = walk;
            }
            center(&mut params[layout.tau()]);
            let mut walk = 0.0;
            let range = layout.tau().end..layout.tau().end + layout.t;
            for ti in range {
                walk += draw_normal(rng, prior.scale_walk);
                params[ti] = walk;
            }
        }
        ModelKind::Expanded => {
            for bi in layout.b..3 * layout.b {
                params[bi] = draw_normal(rng, prior.scale_loc);
            }
            let tau = layout.tau();
            let mut walk = 0.0;
            for ti in tau.clone() {
                walk += draw_normal(rng, prior.scale_walk);
                params[ti] = walk;
            }
            center(&mut params[tau.clone()]);
            for family in 1..=2 {
                let start = tau.start + family * layout.t;
                let mut walk = 0.0;
                for ti in start..start + layout.t {
                    walk += draw_normal(rng, prior.scale_walk);
                    params[ti] = walk;
                }
            }
        }
    }

    let sigma_y = draw_normal(rng, prior.scale_sigma).abs().max(0.05);
    params[layout.log_sigma_y()] = sigma_y.ln();
    params
}

/// Transform generation-scale truths into the standardized scale the emitted
/// dataset will have: an affine rescale by g = 1/(k*sd) with the sample mean
/// of the generated outcome absorbed into the block intercepts.
fn rescale_truth(
    kind: ModelKind,
    layout: &ParamLayout,
    params: &[f64],
    mean_y: f64,
    g: f64,
) -> Vec<f64> {
    let mut out: Vec<f64> = params.iter().map(|v| v * g).collect();
    for v in out[layout.alpha()].iter_mut() {
        *v -= mean_y * g;
    }
    // Scale parameters live on the log scale: sigma' = sigma * g.
    let lsy = layout.log_sigma_y();
    out[lsy] = params[lsy] + g.ln();
    if kind == ModelKind::Spatial {
        let lsb = layout.dim() - 1;
        out[lsb] = params[lsb] + g.ln();
    }
    out
}

/// Generate a synthetic well CSV payload plus the truths behind it.
pub fn simulate(config: &SimConfig) -> Result<SimOutput, SimError> {
    let SimConfig {
        kind,
        blocks,
        times,
        wells,
        seed,
        ..
    } = *config;
    if wells < blocks.max(times).max(2) {
        return Err(SimError::TooFewWells {
            wells,
            blocks,
            times,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let codes = locator_sequence(blocks);
    let cells = blocks * times;

    // Right-skewed cell weights control sparsity: many cells end up with a
    // handful of wells, a few with many.
    let weights: Vec<f64> = (0..cells)
        .map(|_| draw_normal(&mut rng, config.cell_weight_sigma).exp())
        .collect();
    let total_weight: f64 = weights.iter().sum();
    let mut cumulative = Vec::with_capacity(cells);
    let mut acc = 0.0;
    for w in &weights {
        acc += w;
        cumulative.push(acc);
    }

    // Coverage pass: every block and every time gets at least one well.
    let mut cell_of_well = Vec::with_capacity(wells);
    for bi in 0..blocks {
        cell_of_well.push(bi * times + bi % times);
    }
    for ti in 0..times {
        cell_of_well.push((ti % blocks) * times + ti);
    }
    while cell_of_well.len() < wells {
        let u: f64 = rng.random::<f64>() * total_weight;
        let cell = cumulative.partition_point(|c| *c < u).min(cells - 1);
        cell_of_well.push(cell);
    }
    cell_of_well.truncate(wells);

    let mut records: Vec<WellRecord> = cell_of_well
        .iter()
        .enumerate()
        .map(|(i, &cell)| {
            let block = cell / times;
            let time = cell % times;
            let date = WellDate {
                year: config.base_year + time as i32,
                month: rng.random_range(1..=12),
                day: rng.random_range(1..=28),
            };
            WellRecord {
                well_id: format!("w{i:06}"),
                date,
                locator: codes[block],
                // Placeholder outcome; replaced below once the design exists.
                oil: (5.0 + draw_normal(&mut rng, 0.3)).exp(),
                water: (config.log_water_mean + draw_normal(&mut rng, config.log_water_sd)).exp(),
                sand: (config.log_sand_mean + draw_normal(&mut rng, config.log_sand_sd)).exp(),
                lateral: (config.log_lateral_mean + draw_normal(&mut rng, config.log_lateral_sd))
                    .exp(),
                well_type: WellType::Horizontal,
            }
        })
        .collect();

    // Pre-sort into the pipeline's canonical order so design row i is record i.
    dataset::canonical_sort(&mut records);

    let policy = PipelinePolicy::defaults_for(kind);
    let (design, _) = dataset::prepare(records.clone(), policy, kind)?;
    assert_eq!(
        design.n,
        records.len(),
        "simulation records must survive filtering"
    );

    let layout = ParamLayout::for_dataset(&design);
    let prior = PriorConfig::defaults_for(kind);
    let gen_params = match &config.truth_params {
        Some(fixed) => {
            if fixed.len() != layout.dim() {
                return Err(SimError::BadTruthLength {
                    expected: layout.dim(),
                    got: fixed.len(),
                });
            }
            fixed.clone()
        }
        None => draw_truth(kind, &layout, &design, &prior, &mut rng),
    };

    let mu = model::predict_mean(kind, &gen_params, &design)?;
    let sigma_y = gen_params[layout.log_sigma_y()].exp();
    let y_std: Vec<f64> = mu
        .iter()
        .map(|m| m + draw_normal(&mut rng, sigma_y))
        .collect();

    let mean_y = stats::mean(&y_std);
    let sd_y = stats::sample_sd(&y_std);
    let g = 1.0 / (f64::from(policy.scale_k) * sd_y);

    // Map the generated outcome into positive raw oil volumes. The pipeline's
    // standardization is affine-invariant, so the constants only set units.
    match kind {
        ModelKind::Expanded => {
            for (rec, y) in records.iter_mut().zip(&y_std) {
                rec.oil = (5.5 + 0.5 * y).exp();
            }
        }
        _ => {
            let center = 300.0;
            let max_abs = y_std.iter().fold(0.0f64, |m, y| m.max(y.abs())).max(1e-9);
            let scale = (150.0f64).min((center - 1.0) / max_abs);
            for (rec, y) in records.iter_mut().zip(&y_std) {
                rec.oil = center + scale * y;
            }
        }
    }

    let params = rescale_truth(kind, &layout, &gen_params, mean_y, g);

    let mut cell_sums = vec![0.0; blocks * times];
    let mut cell_counts = vec![0usize; blocks * times];
    for i in 0..design.n {
        let cell = design.block_of[i] * times + design.time_of[i];
        cell_sums[cell] += (mu[i] - mean_y) * g;
        cell_counts[cell] += 1;
    }
    let cell_mean_std: Vec<Option<f64>> = cell_sums
        .iter()
        .zip(&cell_counts)
        .map(|(s, c)| if *c == 0 { None } else { Some(s / *c as f64) })
        .collect();

    let truth = SyntheticTruth {
        kind,
        b: blocks,
        t: times,
        n: wells,
        seed,
        param_names: layout.names(),
        sigma_y: params[layout.log_sigma_y()].exp(),
        params,
        block_codes: design.block_codes.clone(),
        cell_counts,
        cell_mean_std,
    };
    Ok(SimOutput { records, truth })
}

/// A random but structurally valid prepared dataset for tests and benches:
/// standardized-looking vectors, dense indices with full block and time
/// coverage, and group averages consistent with the per-well vectors.
pub fn random_prepared_dataset(
    kind: ModelKind,
    b: usize,
    t: usize,
    n: usize,
    seed: u64,
) -> PreparedDataset {
    assert!(n >= b.max(t), "need at least one well per block and time");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let policy = PipelinePolicy::defaults_for(kind);
    let k = policy.scale_k;

    let mut block_of = Vec::with_capacity(n);
    let mut time_of = Vec::with_capacity(n);
    for i in 0..n {
        if i < b.max(t) {
            block_of.push(i % b);
            time_of.push(i % t);
        } else {
            block_of.push(rng.random_range(0..b));
            time_of.push(rng.random_range(0..t));
        }
    }

    let mut vector = |sd: f64| -> Vec<f64> { (0..n).map(|_| draw_normal(&mut rng, sd)).collect() };
    let y = vector(0.5);
    let l = vector(0.5);
    let e = vector(0.5);
    let ew = vector(0.5);
    let es = vector(0.5);

    let dense = |values: &[f64], index: &[usize], count: usize| -> Vec<f64> {
        dataset::group_averages(values, index, count)
            .into_iter()
            .map(|m| m.expect("covered group"))
            .collect()
    };

    let std = |mean: f64, sd: f64| Standardizer { mean, sd, k };
    let mut n_per_block = vec![0usize; b];
    for &g in &block_of {
        n_per_block[g] += 1;
    }
    let mut n_per_time = vec![0usize; t];
    for &g in &time_of {
        n_per_time[g] += 1;
    }

    PreparedDataset {
        kind,
        policy,
        n,
        b,
        t,
        e_bar_b: if kind == ModelKind::SpatioTemporal {
            dense(&e, &block_of, b)
        } else {
            vec![]
        },
        ew_bar_b: if kind == ModelKind::Expanded {
            dense(&ew, &block_of, b)
        } else {
            vec![]
        },
        es_bar_b: if kind == ModelKind::Expanded {
            dense(&es, &block_of, b)
        } else {
            vec![]
        },
        ew_bar_t: if kind == ModelKind::Expanded {
            dense(&ew, &time_of, t)
        } else {
            vec![]
        },
        es_bar_t: if kind == ModelKind::Expanded {
            dense(&es, &time_of, t)
        } else {
            vec![]
        },
        w_bar_b: if kind == ModelKind::Spatial {
            dense(&e, &block_of, b)
        } else {
            vec![]
        },
        e: if kind == ModelKind::SpatioTemporal {
            e
        } else {
            vec![]
        },
        ew: if kind == ModelKind::Expanded {
            ew
        } else {
            vec![]
        },
        es: if kind == ModelKind::Expanded {
            es
        } else {
            vec![]
        },
        y,
        l,
        block_of,
        time_of,
        n_per_block,
        n_per_time,
        standardizers: Standardizers {
            y: std(220.0, 140.0),
            l: std(9500.0, 1800.0),
            e: Some(std(540.0, 160.0)),
            ew: Some(std(310.0, 90.0)),
            es: Some(std(230.0, 80.0)),
            w: Some(std(4.9e6, 1.2e6)),
        },
        block_codes: locator_sequence(b),
        time_labels: (0..t)
            .map(|i| crate::dataset::Period::Year(2015 + i as i32))
            .collect(),
    }
}
