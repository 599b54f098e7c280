//! The four subcommands: preprocess, simulate, fit, report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use serde::Serialize;

use wellcap_core::dataset::{self, ImputationGrouping, PipelinePolicy, TimeGranularity};
use wellcap_core::grid::Locator6;
use wellcap_core::model::{ModelKind, ParamLayout, PriorConfig, LAYOUT_VERSION};
use wellcap_core::report::{self, EstimateTable};
use wellcap_core::sampler::persist::{
    read_draws_csv, write_draws_csv, DrawsMatrix, ManifestDiagnostics, RunManifest,
};
use wellcap_core::sampler::{self, SamplerConfig};
use wellcap_core::sim::{self, SimConfig};

use crate::config::FileConfig;

/// Whether a command completed cleanly or failed its diagnostics gate.
#[derive(Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    DiagnosticsFailed,
}

/// FNV-1a of file contents, used as a cheap provenance checksum.
fn file_checksum(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    Ok(format!("{hash:016x}"))
}

fn provenance_entry(map: &mut BTreeMap<String, String>, key: &str, path: &Path) -> Result<()> {
    map.insert(
        key.to_string(),
        format!("{}#{}", path.display(), file_checksum(path)?),
    );
    Ok(())
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)
        .with_context(|| format!("cannot serialize {}", path.display()))?;
    std::fs::write(path, json + "\n").with_context(|| format!("cannot write {}", path.display()))
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Plain-text key=value configuration file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (also via WELLCAP_OUT_DIR).
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Input well CSV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Model kind: a/spatial, b/spatio_temporal, c/expanded.
    #[arg(long)]
    pub kind: Option<ModelKind>,
    /// Time grouping: year or year_month.
    #[arg(long)]
    pub granularity: Option<String>,
    /// Standardization denominator multiplier (1 or 2).
    #[arg(long)]
    pub scale_k: Option<u8>,
    #[arg(long)]
    pub log_transform: Option<bool>,
    #[arg(long)]
    pub impute_zeros: Option<bool>,
    /// Imputation donor pool: prefix4 or full6.
    #[arg(long)]
    pub imputation_grouping: Option<String>,
}

#[derive(Debug, Serialize)]
struct PreprocessManifest {
    kind: ModelKind,
    policy: PipelinePolicy,
    report: dataset::PipelineReport,
    provenance: BTreeMap<String, String>,
}

fn parse_granularity(raw: &str) -> Result<TimeGranularity> {
    match raw.to_ascii_lowercase().as_str() {
        "year" => Ok(TimeGranularity::Year),
        "year_month" | "year-month" => Ok(TimeGranularity::YearMonth),
        other => bail!("unknown granularity {other:?}: expected year or year_month"),
    }
}

fn parse_grouping(raw: &str) -> Result<ImputationGrouping> {
    match raw.to_ascii_lowercase().as_str() {
        "prefix4" => Ok(ImputationGrouping::Prefix4),
        "full6" => Ok(ImputationGrouping::Full6),
        other => bail!("unknown imputation grouping {other:?}: expected prefix4 or full6"),
    }
}

fn resolve_policy(
    kind: ModelKind,
    args: &PreprocessArgs,
    config: &FileConfig,
) -> Result<PipelinePolicy> {
    let mut policy = PipelinePolicy::defaults_for(kind);
    if let Some(raw) = args
        .granularity
        .clone()
        .or_else(|| config.raw("granularity").map(String::from))
    {
        policy.time_granularity = parse_granularity(&raw)?;
    }
    policy.scale_k = config.resolve(args.scale_k, "scale_k", policy.scale_k)?;
    if !(1..=2).contains(&policy.scale_k) {
        bail!("scale_k must be 1 or 2, got {}", policy.scale_k);
    }
    policy.log_transform =
        config.resolve(args.log_transform, "log_transform", policy.log_transform)?;
    policy.impute_zeros = config.resolve(args.impute_zeros, "impute_zeros", policy.impute_zeros)?;
    if let Some(raw) = args
        .imputation_grouping
        .clone()
        .or_else(|| config.raw("imputation_grouping").map(String::from))
    {
        policy.imputation_grouping = parse_grouping(&raw)?;
    }
    if kind == ModelKind::Expanded && !policy.log_transform {
        bail!("the expanded kind requires log_transform=true");
    }
    Ok(policy)
}

pub fn run_preprocess(args: PreprocessArgs) -> Result<Outcome> {
    let config = FileConfig::load(args.common.config.as_deref())?;
    let input = args
        .input
        .clone()
        .or_else(|| config.raw("input").map(PathBuf::from))
        .ok_or_else(|| anyhow!("preprocess needs --input (or input= in the config file)"))?;
    let kind = config
        .resolve_opt(args.kind, "kind")?
        .ok_or_else(|| anyhow!("preprocess needs --kind"))?;
    let out_dir = config.resolve_out_dir(args.common.out_dir.clone());
    ensure_out_dir(&out_dir)?;
    let policy = resolve_policy(kind, &args, &config)?;

    let records = dataset::read_wells(&input)
        .with_context(|| format!("failed to read wells from {}", input.display()))?;
    let (prepared, pipeline_report) = dataset::prepare(records, policy, kind)?;

    let dataset_path = out_dir.join("dataset.json");
    prepared.save_json(&dataset_path)?;

    let mut provenance = BTreeMap::new();
    provenance_entry(&mut provenance, "input", &input)?;
    provenance_entry(&mut provenance, "dataset", &dataset_path)?;
    let manifest = PreprocessManifest {
        kind,
        policy,
        report: pipeline_report,
        provenance,
    };
    write_json(&out_dir.join("preprocess_report.json"), &manifest)?;

    eprintln!(
        "preprocess: N={} B={} T={} -> {}",
        manifest.report.n,
        manifest.report.b,
        manifest.report.t,
        dataset_path.display()
    );
    Ok(Outcome::Success)
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub kind: Option<ModelKind>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long)]
    pub times: Option<usize>,
    #[arg(long)]
    pub wells: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Log-normal sd of per-cell well-count weights.
    #[arg(long)]
    pub cell_weight_sigma: Option<f64>,
    #[arg(long)]
    pub base_year: Option<i32>,
}

#[derive(Debug, Serialize)]
struct SimulateManifest {
    config: SimConfig,
    provenance: BTreeMap<String, String>,
}

pub fn run_simulate(args: SimulateArgs) -> Result<Outcome> {
    let config = FileConfig::load(args.common.config.as_deref())?;
    let kind = config
        .resolve_opt(args.kind, "kind")?
        .ok_or_else(|| anyhow!("simulate needs --kind"))?;
    let blocks = config.resolve(args.blocks, "blocks", 20)?;
    let times = config.resolve(args.times, "times", 6)?;
    let wells = config.resolve(args.wells, "wells", 1000)?;
    let seed = config.resolve(args.seed, "seed", 0)?;
    let out_dir = config.resolve_out_dir(args.common.out_dir.clone());
    ensure_out_dir(&out_dir)?;

    let mut sim_config = SimConfig::new(kind, blocks, times, wells, seed);
    sim_config.cell_weight_sigma = config.resolve(
        args.cell_weight_sigma,
        "cell_weight_sigma",
        sim_config.cell_weight_sigma,
    )?;
    sim_config.base_year = config.resolve(args.base_year, "base_year", sim_config.base_year)?;

    let out = sim::simulate(&sim_config)?;
    let wells_path = out_dir.join("wells.csv");
    dataset::write_wells_csv(&wells_path, &out.records)?;
    let truth_path = out_dir.join("truth.json");
    out.truth
        .save_json(&truth_path)
        .with_context(|| format!("cannot write {}", truth_path.display()))?;

    let mut provenance = BTreeMap::new();
    provenance_entry(&mut provenance, "wells", &wells_path)?;
    provenance_entry(&mut provenance, "truth", &truth_path)?;
    write_json(
        &out_dir.join("simulate_manifest.json"),
        &SimulateManifest {
            config: sim_config,
            provenance,
        },
    )?;

    eprintln!(
        "simulate: {} wells across {} blocks x {} times -> {}",
        wells,
        blocks,
        times,
        wells_path.display()
    );
    Ok(Outcome::Success)
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Prepared dataset JSON from `preprocess`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Post-warm-up draws per chain.
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub target_accept: Option<f64>,
    #[arg(long)]
    pub max_tree_depth: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub step_size: Option<f64>,
    #[arg(long)]
    pub scale_loc: Option<f64>,
    #[arg(long)]
    pub scale_walk: Option<f64>,
    #[arg(long)]
    pub scale_sigma: Option<f64>,
    /// Do not fail the exit code on R-hat or divergence flags.
    #[arg(long, default_value_t = false)]
    pub no_strict: bool,
}

pub fn run_fit(args: FitArgs) -> Result<Outcome> {
    let config = FileConfig::load(args.common.config.as_deref())?;
    let dataset_path = args
        .dataset
        .clone()
        .or_else(|| config.raw("dataset").map(PathBuf::from))
        .ok_or_else(|| anyhow!("fit needs --dataset"))?;
    let out_dir = config.resolve_out_dir(args.common.out_dir.clone());
    ensure_out_dir(&out_dir)?;

    let data = dataset::PreparedDataset::load_json(&dataset_path)?;
    let kind = data.kind;
    let defaults = SamplerConfig::default();
    let sampler_config = SamplerConfig {
        chains: config.resolve(args.chains, "chains", defaults.chains)?,
        warmup: config.resolve(args.warmup, "warmup", defaults.warmup)?,
        draws_per_chain: config.resolve(args.draws, "draws", defaults.draws_per_chain)?,
        target_accept: config.resolve(
            args.target_accept,
            "target_accept",
            defaults.target_accept,
        )?,
        max_tree_depth: config.resolve(
            args.max_tree_depth,
            "max_tree_depth",
            defaults.max_tree_depth,
        )?,
        seed: config.resolve(args.seed, "seed", defaults.seed)?,
        step_size_init: config.resolve(args.step_size, "step_size", defaults.step_size_init)?,
    };
    let prior_defaults = PriorConfig::defaults_for(kind);
    let prior = PriorConfig {
        scale_loc: config.resolve(args.scale_loc, "scale_loc", prior_defaults.scale_loc)?,
        scale_walk: config.resolve(args.scale_walk, "scale_walk", prior_defaults.scale_walk)?,
        scale_sigma: config.resolve(args.scale_sigma, "scale_sigma", prior_defaults.scale_sigma)?,
    };
    let no_strict = args.no_strict || config.resolve(None, "no_strict", false)?;

    let fit = sampler::fit(kind, &data, &prior, &sampler_config)?;
    eprintln!(
        "fit: {} chains x {} draws in {:.1?}; max R-hat {:.4}, divergences {}",
        sampler_config.chains,
        sampler_config.draws_per_chain,
        fit.draws.wall_time,
        fit.summary.max_rhat,
        fit.summary.total_divergences
    );

    let layout = ParamLayout::for_dataset(&data);
    let matrix = DrawsMatrix::from_draws(&fit.draws, layout.names());
    let draws_path = out_dir.join("draws.csv");
    write_draws_csv(&draws_path, &matrix)?;

    let mut provenance = BTreeMap::new();
    provenance_entry(&mut provenance, "dataset", &dataset_path)?;
    provenance_entry(&mut provenance, "draws", &draws_path)?;
    let manifest = RunManifest {
        layout_version: LAYOUT_VERSION.to_string(),
        kind,
        b: data.b,
        t: data.t,
        n: data.n,
        dim: layout.dim(),
        prior,
        sampler: sampler_config,
        diagnostics: ManifestDiagnostics::from_fit(&fit.summary, &fit.draws),
        provenance,
    };
    manifest.save_json(&out_dir.join("fit_manifest.json"))?;
    write_json(&out_dir.join("fit_summary.json"), &fit.summary.params)?;

    if !fit.summary.passes_strict_gate() {
        if no_strict {
            eprintln!(
                "warning: diagnostics gate failed (max R-hat {:.4}, divergences {}); continuing under --no-strict",
                fit.summary.max_rhat, fit.summary.total_divergences
            );
            return Ok(Outcome::Success);
        }
        eprintln!(
            "error: diagnostics gate failed: max R-hat {:.4}, divergences {}",
            fit.summary.max_rhat, fit.summary.total_divergences
        );
        return Ok(Outcome::DiagnosticsFailed);
    }
    Ok(Outcome::Success)
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Draws CSV from `fit`.
    #[arg(long)]
    pub draws: Option<PathBuf>,
    /// Clamp negative de-standardized estimates to zero.
    #[arg(long, default_value_t = false)]
    pub clamp_negative: bool,
    /// Histogram bin count.
    #[arg(long)]
    pub bins: Option<usize>,
    /// Block set to aggregate, e.g. DN87au+DN87cm or DN87au:1+DN87cm:3.
    /// Repeatable.
    #[arg(long = "aggregate")]
    pub aggregates: Vec<String>,
}

#[derive(Debug, Serialize)]
struct ReportSummary {
    kind: ModelKind,
    n: usize,
    b: usize,
    t: usize,
    clamp_negative: bool,
    bins: usize,
    rmsd: f64,
    discrepancy_low: f64,
    discrepancy_high: f64,
    max_rhat: f64,
    min_ess: f64,
    total_draws: usize,
    provenance: BTreeMap<String, String>,
}

struct AggregateRequest {
    label: String,
    blocks: Vec<Locator6>,
    weights: Option<Vec<f64>>,
}

fn parse_aggregate(spec: &str) -> Result<AggregateRequest> {
    let mut blocks = Vec::new();
    let mut weights = Vec::new();
    let mut any_weight = false;
    for token in spec.split('+') {
        let token = token.trim();
        if token.is_empty() {
            bail!("empty block in aggregate spec {spec:?}");
        }
        let (code, weight) = match token.split_once(':') {
            Some((code, w)) => {
                any_weight = true;
                let weight: f64 = w
                    .parse()
                    .map_err(|_| anyhow!("bad weight {w:?} in aggregate spec {spec:?}"))?;
                (code, weight)
            }
            None => (token, 1.0),
        };
        blocks.push(
            code.parse::<Locator6>()
                .map_err(|e| anyhow!("bad block {code:?} in aggregate spec {spec:?}: {e}"))?,
        );
        weights.push(weight);
    }
    Ok(AggregateRequest {
        label: spec.to_string(),
        blocks,
        weights: if any_weight { Some(weights) } else { None },
    })
}

fn write_trajectories_csv(
    path: &Path,
    series: &[report::TrajectorySeries],
    labels: &[wellcap_core::dataset::Period],
) -> Result<()> {
    let mut out = String::from("parameter,time,mean,q5,q95\n");
    for s in series {
        for (ti, label) in labels.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                s.parameter,
                label.label(),
                s.mean[ti],
                s.q5[ti],
                s.q95[ti]
            ));
        }
    }
    std::fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))
}

fn write_aggregates_csv(
    path: &Path,
    table: &EstimateTable,
    requests: &[AggregateRequest],
) -> Result<()> {
    let mut out = String::from("set,time,value\n");
    for request in requests {
        let values = report::aggregate_blocks(table, &request.blocks, request.weights.as_deref())?;
        for (ti, label) in table.time_labels.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{}\n",
                request.label,
                label.label(),
                values[ti].map_or("NA".to_string(), |v| v.to_string())
            ));
        }
    }
    std::fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))
}

pub fn run_report(args: ReportArgs) -> Result<Outcome> {
    let config = FileConfig::load(args.common.config.as_deref())?;
    let dataset_path = args
        .dataset
        .clone()
        .or_else(|| config.raw("dataset").map(PathBuf::from))
        .ok_or_else(|| anyhow!("report needs --dataset"))?;
    let draws_path = args
        .draws
        .clone()
        .or_else(|| config.raw("draws").map(PathBuf::from))
        .ok_or_else(|| anyhow!("report needs --draws"))?;
    let bins = config.resolve(args.bins, "bins", 30)?;
    let clamp_negative = args.clamp_negative || config.resolve(None, "clamp_negative", false)?;
    let out_dir = config.resolve_out_dir(args.common.out_dir.clone());
    ensure_out_dir(&out_dir)?;

    let mut aggregate_specs: Vec<String> = args.aggregates.clone();
    if aggregate_specs.is_empty() {
        if let Some(raw) = config.raw("aggregate") {
            aggregate_specs = raw
                .split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect();
        }
    }
    let requests: Vec<AggregateRequest> = aggregate_specs
        .iter()
        .map(|s| parse_aggregate(s))
        .collect::<Result<_>>()?;

    let data = dataset::PreparedDataset::load_json(&dataset_path)?;
    let kind = data.kind;
    let matrix = read_draws_csv(&draws_path)?;
    let layout = ParamLayout::for_dataset(&data);
    if matrix.names != layout.names() {
        bail!(
            "draws columns do not match the {} layout for B={} T={}",
            kind,
            data.b,
            data.t
        );
    }

    let predictions = report::posterior_mean_predictions(&matrix, kind, &data, clamp_negative)?;
    let observed = report::observed_original_scale(&data);
    let rmsd = report::rmsd(&predictions, &observed)?;
    let (lo, hi) = report::discrepancy_interval(&predictions, &observed, 0.05, 0.95)?;

    let model_table = report::estimate_table(&predictions, &data);
    model_table.write_csv(&out_dir.join("estimate_table.csv"))?;
    let observed_table = report::observed_table(&data);
    observed_table.write_csv(&out_dir.join("observed_table.csv"))?;

    let histogram = report::histogram_data(&predictions, &observed, bins)?;
    std::fs::write(out_dir.join("histogram.csv"), histogram.to_csv_string())?;

    if kind.has_time_parameters() {
        let series = report::time_trajectories(&matrix, kind)?;
        write_trajectories_csv(
            &out_dir.join("trajectories.csv"),
            &series,
            &data.time_labels,
        )?;
    }

    if !requests.is_empty() {
        write_aggregates_csv(&out_dir.join("aggregates.csv"), &model_table, &requests)?;
    }

    // Convergence diagnostics recomputed from the draws on file.
    let mut max_rhat = f64::NAN;
    let mut min_ess = f64::NAN;
    for j in 0..matrix.dim {
        let chains = matrix.param_chains(j);
        max_rhat = max_rhat.max(sampler::split_rhat(&chains));
        min_ess = min_ess.min(sampler::ess_bulk(&chains));
    }

    let mut provenance = BTreeMap::new();
    provenance_entry(&mut provenance, "dataset", &dataset_path)?;
    provenance_entry(&mut provenance, "draws", &draws_path)?;
    let summary = ReportSummary {
        kind,
        n: data.n,
        b: data.b,
        t: data.t,
        clamp_negative,
        bins,
        rmsd,
        discrepancy_low: lo,
        discrepancy_high: hi,
        max_rhat,
        min_ess,
        total_draws: matrix.total_draws(),
        provenance,
    };
    write_json(&out_dir.join("summary.json"), &summary)?;

    eprintln!(
        "report: RMSD {:.3}, 90% discrepancies in [{:.3}, {:.3}] -> {}",
        rmsd,
        lo,
        hi,
        out_dir.display()
    );
    Ok(Outcome::Success)
}
