//! Turning draws into outputs: posterior predictive summaries, RMSD and
//! discrepancy intervals, block-by-time estimate tables, block aggregation,
//! and time-parameter trajectories.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Period, PreparedDataset};
use crate::grid::Locator6;
use crate::model::{self, ModelKind, ParamLayout};
use crate::sampler::persist::DrawsMatrix;
use crate::stats;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("length mismatch: predicted {pred} vs observed {obs}")]
    LengthMismatch { pred: usize, obs: usize },
    #[error("empty vectors")]
    Empty,
    #[error("bin count must be at least 1")]
    BadBinCount,
    #[error("model kind {0} has no time-indexed parameters")]
    NoTimeParameters(ModelKind),
    #[error("block {0} not present in the table")]
    UnknownBlock(String),
    #[error("weights must be non-negative, match the block set, and not all be zero")]
    BadWeights,
    #[error("draws have {got} columns but the layout needs {expected}")]
    DrawsMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Model(#[from] model::ModelError),
}

/// Root-mean-square deviation between predictions and observations.
pub fn rmsd(pred: &[f64], obs: &[f64]) -> Result<f64, ReportError> {
    if pred.len() != obs.len() {
        return Err(ReportError::LengthMismatch {
            pred: pred.len(),
            obs: obs.len(),
        });
    }
    if pred.is_empty() {
        return Err(ReportError::Empty);
    }
    let sum: f64 = pred.iter().zip(obs).map(|(p, o)| (p - o) * (p - o)).sum();
    Ok((sum / pred.len() as f64).sqrt())
}

/// Empirical quantiles of the discrepancies `obs - pred`, linear
/// interpolation between order statistics.
pub fn discrepancy_interval(
    pred: &[f64],
    obs: &[f64],
    lo: f64,
    hi: f64,
) -> Result<(f64, f64), ReportError> {
    if pred.len() != obs.len() {
        return Err(ReportError::LengthMismatch {
            pred: pred.len(),
            obs: obs.len(),
        });
    }
    if pred.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut discrepancies: Vec<f64> = obs.iter().zip(pred).map(|(o, p)| o - p).collect();
    discrepancies.sort_by(|a, b| a.total_cmp(b));
    Ok((
        stats::quantile(&discrepancies, lo),
        stats::quantile(&discrepancies, hi),
    ))
}

/// Observed outcomes on the original scale: de-standardized, and
/// exponentiated when the pipeline log-transformed the outcome.
pub fn observed_original_scale(data: &PreparedDataset) -> Vec<f64> {
    let std_y = data.standardizers.y;
    data.y
        .iter()
        .map(|z| {
            let v = std_y.invert(*z);
            if data.policy.log_transform {
                v.exp()
            } else {
                v
            }
        })
        .collect()
}

/// Mean of the per-draw predictive means for every well, mapped back to the
/// original scale. Negative estimates are clamped to zero when requested.
pub fn posterior_mean_predictions(
    draws: &DrawsMatrix,
    kind: ModelKind,
    data: &PreparedDataset,
    clamp_negative: bool,
) -> Result<Vec<f64>, ReportError> {
    let layout = ParamLayout::for_dataset(data);
    if draws.dim != layout.dim() {
        return Err(ReportError::DrawsMismatch {
            expected: layout.dim(),
            got: draws.dim,
        });
    }
    let mut acc = vec![0.0; data.n];
    let total = draws.total_draws();
    for chain in 0..draws.chains {
        for i in 0..draws.draws_per_chain {
            let mu = model::predict_mean(kind, draws.draw(chain, i), data)?;
            for (a, m) in acc.iter_mut().zip(&mu) {
                *a += m;
            }
        }
    }
    let std_y = data.standardizers.y;
    Ok(acc
        .into_iter()
        .map(|sum| {
            let mut v = std_y.invert(sum / total as f64);
            if data.policy.log_transform {
                v = v.exp();
            }
            if clamp_negative && v < 0.0 {
                v = 0.0;
            }
            v
        })
        .collect())
}

/// Aligned histograms of predictions and observations over shared bin edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramData {
    /// `bin_count + 1` edges spanning both series.
    pub edges: Vec<f64>,
    pub pred_counts: Vec<u64>,
    pub obs_counts: Vec<u64>,
}

impl HistogramData {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("bin_low,bin_high,predicted,observed\n");
        for i in 0..self.pred_counts.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.edges[i],
                self.edges[i + 1],
                self.pred_counts[i],
                self.obs_counts[i]
            ));
        }
        out
    }
}

pub fn histogram_data(
    pred: &[f64],
    obs: &[f64],
    bin_count: usize,
) -> Result<HistogramData, ReportError> {
    if bin_count == 0 {
        return Err(ReportError::BadBinCount);
    }
    if pred.is_empty() || obs.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in pred.iter().chain(obs) {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bin_count as f64;
    let edges: Vec<f64> = (0..=bin_count).map(|i| lo + width * i as f64).collect();
    let bin_of = |v: f64| -> usize {
        let idx = ((v - lo) / width).floor() as isize;
        idx.clamp(0, bin_count as isize - 1) as usize
    };
    let mut pred_counts = vec![0u64; bin_count];
    for &v in pred {
        pred_counts[bin_of(v)] += 1;
    }
    let mut obs_counts = vec![0u64; bin_count];
    for &v in obs {
        obs_counts[bin_of(v)] += 1;
    }
    Ok(HistogramData {
        edges,
        pred_counts,
        obs_counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ModelBased,
    ObservedAverage,
}

/// Block-by-time table with explicit missing cells: a cell is missing
/// exactly when no wells fall in that block-time combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateTable {
    pub block_codes: Vec<Locator6>,
    pub time_labels: Vec<Period>,
    /// Row-major over blocks then times.
    pub values: Vec<Option<f64>>,
    pub provenance: Provenance,
}

impl EstimateTable {
    pub fn get(&self, block: usize, time: usize) -> Option<f64> {
        self.values[block * self.time_labels.len() + time]
    }

    pub fn block_index(&self, code: &Locator6) -> Option<usize> {
        self.block_codes.iter().position(|c| c == code)
    }

    /// CSV with an `NA` literal for missing cells.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("block");
        for label in &self.time_labels {
            out.push(',');
            out.push_str(&label.label());
        }
        out.push('\n');
        for (bi, code) in self.block_codes.iter().enumerate() {
            out.push_str(code.as_str());
            for ti in 0..self.time_labels.len() {
                out.push(',');
                match self.get(bi, ti) {
                    Some(v) => out.push_str(&format!("{v}")),
                    None => out.push_str("NA"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &std::path::Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_csv_string())
    }
}

fn cell_table(values: &[f64], data: &PreparedDataset, provenance: Provenance) -> EstimateTable {
    let cells = data.b * data.t;
    let cell_of: Vec<usize> = data
        .block_of
        .iter()
        .zip(&data.time_of)
        .map(|(b, t)| b * data.t + t)
        .collect();
    let values = crate::dataset::group_averages(values, &cell_of, cells);
    EstimateTable {
        block_codes: data.block_codes.clone(),
        time_labels: data.time_labels.clone(),
        values,
        provenance,
    }
}

/// Average the per-well predictions within each block-time cell.
pub fn estimate_table(predictions: &[f64], data: &PreparedDataset) -> EstimateTable {
    assert_eq!(predictions.len(), data.n, "predictions must align to wells");
    cell_table(predictions, data, Provenance::ModelBased)
}

/// Average the observed outcomes (original scale) within each cell.
pub fn observed_table(data: &PreparedDataset) -> EstimateTable {
    let observed = observed_original_scale(data);
    cell_table(&observed, data, Provenance::ObservedAverage)
}

/// Weighted combination of a block set, per time: sum(v_bt * w_b) / sum(w_b).
/// Equal weights reduce to the unweighted mean. A missing cell in the
/// requested set yields a missing result for that time.
pub fn aggregate_blocks(
    table: &EstimateTable,
    block_set: &[Locator6],
    weights: Option<&[f64]>,
) -> Result<Vec<Option<f64>>, ReportError> {
    if block_set.is_empty() {
        return Err(ReportError::Empty);
    }
    let indices: Vec<usize> = block_set
        .iter()
        .map(|code| {
            table
                .block_index(code)
                .ok_or_else(|| ReportError::UnknownBlock(code.to_string()))
        })
        .collect::<Result<_, _>>()?;
    let weights: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != block_set.len()
                || w.iter().any(|v| *v < 0.0)
                || w.iter().sum::<f64>() == 0.0
            {
                return Err(ReportError::BadWeights);
            }
            w.to_vec()
        }
        None => vec![1.0; block_set.len()],
    };
    let weight_sum: f64 = weights.iter().sum();

    let t = table.time_labels.len();
    let mut out = Vec::with_capacity(t);
    for ti in 0..t {
        let mut acc = 0.0;
        let mut complete = true;
        for (bi, w) in indices.iter().zip(&weights) {
            match table.get(*bi, ti) {
                Some(v) => acc += v * w,
                None => {
                    complete = false;
                    break;
                }
            }
        }
        out.push(if complete {
            Some(acc / weight_sum)
        } else {
            None
        });
    }
    Ok(out)
}

/// Posterior mean and 5%/95% band of one time-indexed parameter family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySeries {
    pub parameter: String,
    pub mean: Vec<f64>,
    pub q5: Vec<f64>,
    pub q95: Vec<f64>,
}

/// Per-time trajectories of the kind's time-indexed parameter families:
/// tau and gamma_t for the spatio-temporal kind; tau, phi, and omega for
/// the expanded kind.
pub fn time_trajectories(
    draws: &DrawsMatrix,
    kind: ModelKind,
) -> Result<Vec<TrajectorySeries>, ReportError> {
    let families: &[&str] = match kind {
        ModelKind::Spatial => return Err(ReportError::NoTimeParameters(kind)),
        ModelKind::SpatioTemporal => &["tau", "gamma_t"],
        ModelKind::Expanded => &["tau", "phi", "omega"],
    };
    let mut out = Vec::with_capacity(families.len());
    for family in families {
        let mut mean = Vec::new();
        let mut q5 = Vec::new();
        let mut q95 = Vec::new();
        for j in 1.. {
            let Some(idx) = draws.param_index(&format!("{family}[{j}]")) else {
                break;
            };
            let pooled = draws.pooled_param(idx);
            mean.push(stats::mean(&pooled));
            q5.push(stats::quantile_of(&pooled, 0.05));
            q95.push(stats::quantile_of(&pooled, 0.95));
        }
        if mean.is_empty() {
            return Err(ReportError::DrawsMismatch {
                expected: 1,
                got: 0,
            });
        }
        out.push(TrajectorySeries {
            parameter: family.to_string(),
            mean,
            q5,
            q95,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{PipelinePolicy, Standardizer, Standardizers};
    use crate::sim::random_prepared_dataset;

    #[test]
    fn rmsd_basics() {
        assert_eq!(rmsd(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        let v = rmsd(&[1.0, 2.0], &[1.0, 4.0]).unwrap();
        assert!((v - 2.0f64.sqrt()).abs() < 1e-12);
        // Symmetric in its arguments.
        let a = [0.4, -1.0, 2.2];
        let b = [1.1, 0.0, -0.7];
        assert_eq!(rmsd(&a, &b).unwrap(), rmsd(&b, &a).unwrap());
        assert!(rmsd(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn discrepancy_interval_hand_case() {
        // Discrepancies -2,-1,0,1,2: h = 4q interpolation gives -1.8 and 1.8.
        let obs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let pred = [2.0, 2.0, 2.0, 2.0, 2.0];
        let (lo, hi) = discrepancy_interval(&pred, &obs, 0.05, 0.95).unwrap();
        assert!((lo - (-1.8)).abs() < 1e-12);
        assert!((hi - 1.8).abs() < 1e-12);

        let flat = discrepancy_interval(&[1.0, 1.0], &[4.0, 4.0], 0.05, 0.95).unwrap();
        assert_eq!(flat, (3.0, 3.0));
    }

    fn single_draw_matrix(data: &crate::dataset::PreparedDataset, params: Vec<f64>) -> DrawsMatrix {
        let layout = ParamLayout::for_dataset(data);
        DrawsMatrix {
            names: layout.names(),
            chains: 1,
            draws_per_chain: 1,
            dim: layout.dim(),
            values: params,
        }
    }

    #[test]
    fn single_draw_prediction_is_exact() {
        let data = random_prepared_dataset(ModelKind::SpatioTemporal, 4, 3, 30, 77);
        let layout = ParamLayout::for_dataset(&data);
        let params: Vec<f64> = (0..layout.dim()).map(|i| (i as f64) * 0.01 - 0.2).collect();
        let draws = single_draw_matrix(&data, params.clone());
        let preds =
            posterior_mean_predictions(&draws, ModelKind::SpatioTemporal, &data, false).unwrap();
        let mu = model::predict_mean(ModelKind::SpatioTemporal, &params, &data).unwrap();
        for (p, m) in preds.iter().zip(&mu) {
            assert_eq!(*p, data.standardizers.y.invert(*m));
        }
    }

    #[test]
    fn clamp_only_touches_negative_estimates() {
        let mut data = random_prepared_dataset(ModelKind::Spatial, 3, 1, 20, 13);
        // Push the standardizer so some de-standardized values go negative.
        data.standardizers.y = Standardizer {
            mean: 10.0,
            sd: 200.0,
            k: 1,
        };
        let layout = ParamLayout::for_dataset(&data);
        let mut params = vec![0.0; layout.dim()];
        for (i, v) in params.iter_mut().enumerate() {
            *v = if i % 2 == 0 { -0.4 } else { 0.3 };
        }
        let draws = single_draw_matrix(&data, params);
        let open = posterior_mean_predictions(&draws, ModelKind::Spatial, &data, false).unwrap();
        let clamped = posterior_mean_predictions(&draws, ModelKind::Spatial, &data, true).unwrap();
        assert!(open.iter().any(|v| *v < 0.0), "fixture needs negatives");
        for (o, c) in open.iter().zip(&clamped) {
            if *o < 0.0 {
                assert_eq!(*c, 0.0);
            } else {
                assert_eq!(o, c);
            }
        }
    }

    #[test]
    fn histogram_shared_bins() {
        let a = [1.0, 2.0, 3.0];
        let h = histogram_data(&a, &a, 4).unwrap();
        assert_eq!(h.pred_counts, h.obs_counts);
        assert_eq!(h.pred_counts.iter().sum::<u64>(), 3);

        let pred = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 10.0];
        let obs = [0.5, 0.5, 0.5, 2.5, 2.5, 4.5, 6.5, 8.5, 9.5, 9.9];
        let h = histogram_data(&pred, &obs, 5).unwrap();
        // Edges at 0,2,4,6,8,10; values on an edge belong to the upper bin,
        // except the maximum which closes the last bin.
        assert_eq!(h.pred_counts, vec![2, 2, 2, 2, 2]);
        assert_eq!(h.obs_counts, vec![3, 2, 1, 1, 3]);
        assert!(histogram_data(&a, &a, 0).is_err());
    }

    /// The reference DN87 excerpt: ten blocks by ten years with one entry
    /// per observed cell, model-based and observed-average variants.
    fn dn87_fixture() -> (crate::dataset::PreparedDataset, Vec<f64>) {
        let blocks = [
            "DN87au", "DN87cm", "DN87cq", "DN87cw", "DN87dd", "DN87df", "DN87dq", "DN87dw",
            "DN87dx", "DN87ef",
        ];
        // (block index, year offset from 2015, model value, observed value)
        let cells: [(usize, usize, f64, f64); 11] = [
            (0, 0, 234.0, 222.0),
            (1, 0, 343.0, 347.0),
            (2, 0, 357.0, 354.0),
            (3, 0, 308.0, 295.0),
            (4, 2, 460.0, 378.0),
            (5, 0, 189.0, 91.0),
            (6, 0, 243.0, 210.0),
            (7, 0, 234.0, 147.0),
            (8, 0, 140.0, 217.0),
            (8, 1, 239.0, 132.0),
            (9, 3, 360.0, 273.0),
        ];
        let n = cells.len();
        let identity = Standardizer {
            mean: 0.0,
            sd: 1.0,
            k: 1,
        };
        let data = crate::dataset::PreparedDataset {
            kind: ModelKind::SpatioTemporal,
            policy: PipelinePolicy::defaults_for(ModelKind::SpatioTemporal),
            n,
            b: blocks.len(),
            t: 10,
            y: cells.iter().map(|c| c.3).collect(),
            l: vec![0.0; n],
            e: vec![],
            ew: vec![],
            es: vec![],
            block_of: cells.iter().map(|c| c.0).collect(),
            time_of: cells.iter().map(|c| c.1).collect(),
            n_per_block: {
                let mut v = vec![0; blocks.len()];
                for c in &cells {
                    v[c.0] += 1;
                }
                v
            },
            n_per_time: {
                let mut v = vec![0; 10];
                for c in &cells {
                    v[c.1] += 1;
                }
                v
            },
            e_bar_b: vec![0.0; blocks.len()],
            ew_bar_b: vec![],
            es_bar_b: vec![],
            ew_bar_t: vec![],
            es_bar_t: vec![],
            w_bar_b: vec![],
            standardizers: Standardizers {
                y: identity,
                l: identity,
                e: None,
                ew: None,
                es: None,
                w: None,
            },
            block_codes: blocks.iter().map(|b| b.parse().unwrap()).collect(),
            time_labels: (2015..2025).map(Period::Year).collect(),
        };
        let model_preds = cells.iter().map(|c| c.2).collect();
        (data, model_preds)
    }

    #[test]
    fn dn87_layout_matches_reference_tables() {
        let (data, preds) = dn87_fixture();
        let model = estimate_table(&preds, &data);
        let observed = observed_table(&data);

        // Identical missingness masks, NA everywhere except the 11 cells.
        let filled = model.values.iter().flatten().count();
        assert_eq!(filled, 11);
        for (m, o) in model.values.iter().zip(&observed.values) {
            assert_eq!(m.is_some(), o.is_some());
        }

        // Spot checks against the reference rows.
        let au = model.block_index(&"DN87au".parse().unwrap()).unwrap();
        assert_eq!(model.get(au, 0), Some(234.0));
        assert_eq!(observed.get(au, 0), Some(222.0));
        let dx = model.block_index(&"DN87dx".parse().unwrap()).unwrap();
        assert_eq!(observed.get(dx, 1), Some(132.0));
        let df = observed.block_index(&"DN87df".parse().unwrap()).unwrap();
        assert_eq!(observed.get(df, 0), Some(91.0));
        let dd = model.block_index(&"DN87dd".parse().unwrap()).unwrap();
        assert_eq!(model.get(dd, 2), Some(460.0));
        assert_eq!(model.get(dd, 0), None);

        // CSV rendering uses the NA literal.
        let csv = model.to_csv_string();
        let first_row = csv.lines().nth(1).unwrap();
        assert_eq!(first_row, "DN87au,234,NA,NA,NA,NA,NA,NA,NA,NA,NA");
    }

    #[test]
    fn aggregation_matches_reference_combination() {
        let (data, preds) = dn87_fixture();
        let model = estimate_table(&preds, &data);
        let observed = observed_table(&data);
        let set: Vec<Locator6> = vec!["DN87au".parse().unwrap(), "DN87cm".parse().unwrap()];

        let combined = aggregate_blocks(&model, &set, None).unwrap();
        assert_eq!(combined[0], Some(288.5));
        // 2016 is missing for both blocks.
        assert_eq!(combined[1], None);

        let combined_obs = aggregate_blocks(&observed, &set, None).unwrap();
        assert_eq!(combined_obs[0], Some(284.5));
    }

    #[test]
    fn aggregation_weights_and_errors() {
        let (data, preds) = dn87_fixture();
        let table = estimate_table(&preds, &data);
        let one: Vec<Locator6> = vec!["DN87cq".parse().unwrap()];
        assert_eq!(
            aggregate_blocks(&table, &one, None).unwrap()[0],
            Some(357.0)
        );

        let set: Vec<Locator6> = vec!["DN87au".parse().unwrap(), "DN87cm".parse().unwrap()];
        // Weighted mean: (234*1 + 343*3) / 4.
        let weighted = aggregate_blocks(&table, &set, Some(&[1.0, 3.0])).unwrap();
        assert_eq!(weighted[0], Some(315.75));
        // All weight on one block reproduces that block's cell.
        let pinned = aggregate_blocks(&table, &set, Some(&[1.0, 0.0])).unwrap();
        assert_eq!(pinned[0], Some(234.0));

        assert!(matches!(
            aggregate_blocks(&table, &set, Some(&[1.0])),
            Err(ReportError::BadWeights)
        ));
        assert!(matches!(
            aggregate_blocks(&table, &set, Some(&[0.0, 0.0])),
            Err(ReportError::BadWeights)
        ));
        let missing: Vec<Locator6> = vec!["AA00aa".parse().unwrap()];
        assert!(matches!(
            aggregate_blocks(&table, &missing, None),
            Err(ReportError::UnknownBlock(_))
        ));
    }

    #[test]
    fn shared_cell_averages_its_predictions() {
        // Two predictions landing in one block-time cell average to 15.
        let mut data = random_prepared_dataset(ModelKind::SpatioTemporal, 2, 2, 4, 71);
        data.block_of = vec![0, 0, 1, 1];
        data.time_of = vec![0, 0, 0, 1];
        let table = estimate_table(&[10.0, 20.0, 5.0, 7.0], &data);
        assert_eq!(table.get(0, 0), Some(15.0));
        assert_eq!(table.get(0, 1), None);
        assert_eq!(table.get(1, 0), Some(5.0));

        // Weights {1, 3} on cells {100, 200} combine to 175.
        let two = EstimateTable {
            block_codes: vec!["DN87aa".parse().unwrap(), "DN87ab".parse().unwrap()],
            time_labels: vec![Period::Year(2015)],
            values: vec![Some(100.0), Some(200.0)],
            provenance: Provenance::ModelBased,
        };
        let set: Vec<Locator6> = vec!["DN87aa".parse().unwrap(), "DN87ab".parse().unwrap()];
        let combined = aggregate_blocks(&two, &set, Some(&[1.0, 3.0])).unwrap();
        assert_eq!(combined[0], Some(175.0));
    }

    #[test]
    fn observed_table_weighted_grand_mean_decomposes() {
        let data = random_prepared_dataset(ModelKind::SpatioTemporal, 4, 3, 60, 3);
        let table = observed_table(&data);
        let observed = observed_original_scale(&data);
        let mut cell_counts = vec![0usize; data.b * data.t];
        for i in 0..data.n {
            cell_counts[data.block_of[i] * data.t + data.time_of[i]] += 1;
        }
        let mut weighted = 0.0;
        for (cell, count) in cell_counts.iter().enumerate() {
            if *count > 0 {
                weighted += table.values[cell].unwrap() * *count as f64;
            }
        }
        let grand = crate::stats::mean(&observed);
        assert!((weighted / data.n as f64 - grand).abs() < 1e-9 * grand.abs().max(1.0));
    }

    #[test]
    fn destandardization_consistency() {
        let data = random_prepared_dataset(ModelKind::SpatioTemporal, 4, 3, 50, 21);
        let table = observed_table(&data);

        let mut raw = data.clone();
        raw.y = observed_original_scale(&data);
        raw.standardizers.y = Standardizer {
            mean: 0.0,
            sd: 1.0,
            k: 1,
        };
        let raw_table = observed_table(&raw);
        for (a, b) in table.values.iter().zip(&raw_table.values) {
            match (a, b) {
                (Some(x), Some(y)) => assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0)),
                (None, None) => {}
                _ => panic!("mask mismatch"),
            }
        }
    }

    #[test]
    fn trajectories_shapes_and_errors() {
        let data = random_prepared_dataset(ModelKind::SpatioTemporal, 3, 4, 30, 55);
        let layout = ParamLayout::for_dataset(&data);
        // Constant draws: flat series equal to the constant.
        let dim = layout.dim();
        let mut values = Vec::new();
        for _ in 0..8 {
            values.extend((0..dim).map(|i| i as f64 * 0.1));
        }
        let draws = DrawsMatrix {
            names: layout.names(),
            chains: 2,
            draws_per_chain: 4,
            dim,
            values,
        };
        let series = time_trajectories(&draws, ModelKind::SpatioTemporal).unwrap();
        assert_eq!(series.len(), 2);
        assert_eq!(series[0].parameter, "tau");
        assert_eq!(series[0].mean.len(), data.t);
        for s in &series {
            for ti in 0..data.t {
                assert!((s.mean[ti] - s.q5[ti]).abs() < 1e-12);
                assert!((s.mean[ti] - s.q95[ti]).abs() < 1e-12);
            }
        }
        let tau_start = 2 * data.b;
        assert!((series[0].mean[0] - tau_start as f64 * 0.1).abs() < 1e-12);

        assert!(matches!(
            time_trajectories(&draws, ModelKind::Spatial),
            Err(ReportError::NoTimeParameters(ModelKind::Spatial))
        ));
    }
}
