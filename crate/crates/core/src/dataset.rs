//! Well-record ingestion and the preparation pipeline: filtering,
//! zero-imputation, log transforms, standardization, and group indexing.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::grid::{self, Locator6};
use crate::model::ModelKind;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("missing required columns: {}", .0.join(", "))]
    MissingColumns(Vec<String>),
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("variable {0} has no positive values anywhere; cannot impute zeros")]
    NoPositiveDonors(&'static str),
    #[error("variable {variable} must be positive before log transform, found {value}")]
    NonPositiveForLog { variable: &'static str, value: f64 },
    #[error("cannot standardize {0}: zero standard deviation (constant variable)")]
    ZeroSd(String),
    #[error("vector too short to standardize: need at least 2 values, got {0}")]
    TooShort(usize),
    #[error("need at least 2 wells after filtering, got {0}")]
    TooFewWells(usize),
    #[error("{0:?} needs at least 2 time periods, found 1")]
    SinglePeriod(ModelKind),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Calendar date, parsed from ISO-8601 `YYYY-MM-DD`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WellDate {
    pub year: i32,
    pub month: u32,
    pub day: u32,
}

fn days_in_month(year: i32, month: u32) -> u32 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 => {
            let leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
            if leap {
                29
            } else {
                28
            }
        }
        _ => 0,
    }
}

impl FromStr for WellDate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split('-').collect();
        if parts.len() != 3 || parts[0].len() != 4 || parts[1].len() != 2 || parts[2].len() != 2 {
            return Err(format!("date {s:?} is not in YYYY-MM-DD form"));
        }
        let year: i32 = parts[0].parse().map_err(|_| format!("bad year in {s:?}"))?;
        let month: u32 = parts[1]
            .parse()
            .map_err(|_| format!("bad month in {s:?}"))?;
        let day: u32 = parts[2].parse().map_err(|_| format!("bad day in {s:?}"))?;
        if !(1..=12).contains(&month) {
            return Err(format!("month {month} out of range in {s:?}"));
        }
        if day == 0 || day > days_in_month(year, month) {
            return Err(format!("day {day} out of range in {s:?}"));
        }
        Ok(WellDate { year, month, day })
    }
}

impl fmt::Display for WellDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}-{:02}", self.year, self.month, self.day)
    }
}

/// Time-grouping resolution for the stacked cross-sections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeGranularity {
    Year,
    YearMonth,
}

/// One column of the block-by-time layout: a calendar year or year-month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Period {
    Year(i32),
    YearMonth(i32, u32),
}

impl Period {
    pub fn of(date: WellDate, granularity: TimeGranularity) -> Period {
        match granularity {
            TimeGranularity::Year => Period::Year(date.year),
            TimeGranularity::YearMonth => Period::YearMonth(date.year, date.month),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Period::Year(y) => format!("{y}"),
            Period::YearMonth(y, m) => format!("{y}-{m:02}"),
        }
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for Period {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('-') {
            None => s
                .parse::<i32>()
                .map(Period::Year)
                .map_err(|_| format!("bad period {s:?}")),
            Some((y, m)) => {
                let year = y.parse::<i32>().map_err(|_| format!("bad period {s:?}"))?;
                let month = m.parse::<u32>().map_err(|_| format!("bad period {s:?}"))?;
                if !(1..=12).contains(&month) {
                    return Err(format!("bad month in period {s:?}"));
                }
                Ok(Period::YearMonth(year, month))
            }
        }
    }
}

impl Serialize for Period {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for Period {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WellType {
    Horizontal,
    Vertical,
    Other,
}

impl FromStr for WellType {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "horizontal" => WellType::Horizontal,
            "vertical" => WellType::Vertical,
            _ => WellType::Other,
        })
    }
}

/// One well observation after location resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellRecord {
    pub well_id: String,
    pub date: WellDate,
    pub locator: Locator6,
    pub oil: f64,
    pub water: f64,
    pub sand: f64,
    pub lateral: f64,
    pub well_type: WellType,
}

/// Which block definition zero-imputation pools donors over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputationGrouping {
    Prefix4,
    Full6,
}

/// Pipeline switches; defaults depend on the model kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelinePolicy {
    pub time_granularity: TimeGranularity,
    pub scale_k: u8,
    pub log_transform: bool,
    pub impute_zeros: bool,
    pub imputation_grouping: ImputationGrouping,
}

impl PipelinePolicy {
    pub fn defaults_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Spatial => PipelinePolicy {
                time_granularity: TimeGranularity::Year,
                scale_k: 1,
                log_transform: false,
                impute_zeros: false,
                imputation_grouping: ImputationGrouping::Prefix4,
            },
            ModelKind::SpatioTemporal => PipelinePolicy {
                time_granularity: TimeGranularity::Year,
                scale_k: 2,
                log_transform: false,
                impute_zeros: false,
                imputation_grouping: ImputationGrouping::Prefix4,
            },
            ModelKind::Expanded => PipelinePolicy {
                time_granularity: TimeGranularity::Year,
                scale_k: 2,
                log_transform: true,
                impute_zeros: true,
                imputation_grouping: ImputationGrouping::Prefix4,
            },
        }
    }
}

/// Affine map recorded at standardization time: z = (x - mean) / (k * sd).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub sd: f64,
    pub k: u8,
}

impl Standardizer {
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / (f64::from(self.k) * self.sd)
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * f64::from(self.k) * self.sd + self.mean
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizers {
    pub y: Standardizer,
    pub l: Standardizer,
    pub e: Option<Standardizer>,
    pub ew: Option<Standardizer>,
    pub es: Option<Standardizer>,
    pub w: Option<Standardizer>,
}

/// Model-ready data: standardized vectors, dense group indices (0-based),
/// and the group-level averages each model kind consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedDataset {
    pub kind: ModelKind,
    pub policy: PipelinePolicy,
    pub n: usize,
    pub b: usize,
    pub t: usize,
    pub y: Vec<f64>,
    pub l: Vec<f64>,
    pub e: Vec<f64>,
    pub ew: Vec<f64>,
    pub es: Vec<f64>,
    pub block_of: Vec<usize>,
    pub time_of: Vec<usize>,
    pub n_per_block: Vec<usize>,
    pub n_per_time: Vec<usize>,
    pub e_bar_b: Vec<f64>,
    pub ew_bar_b: Vec<f64>,
    pub es_bar_b: Vec<f64>,
    pub ew_bar_t: Vec<f64>,
    pub es_bar_t: Vec<f64>,
    pub w_bar_b: Vec<f64>,
    pub standardizers: Standardizers,
    pub block_codes: Vec<Locator6>,
    pub time_labels: Vec<Period>,
}

impl PreparedDataset {
    pub fn save_json(&self, path: &Path) -> Result<(), DatasetError> {
        let file = File::create(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut writer = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut writer, self).map_err(|e| DatasetError::Io {
            path: path.display().to_string(),
            source: io::Error::other(e),
        })?;
        writer.write_all(b"\n").map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self, DatasetError> {
        let file = File::open(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_reader(BufReader::new(file)).map_err(|e| DatasetError::Io {
            path: path.display().to_string(),
            source: io::Error::other(e),
        })
    }
}

const REQUIRED_COLUMNS: [&str; 10] = [
    "well_id",
    "date",
    "lat",
    "lon",
    "locator",
    "oil_bbl",
    "water_gal",
    "sand_lb",
    "lateral_ft",
    "well_type",
];

fn row_err(line: u64, message: impl Into<String>) -> DatasetError {
    DatasetError::Row {
        line,
        message: message.into(),
    }
}

fn parse_field(raw: &str, column: &str, line: u64) -> Result<f64, DatasetError> {
    raw.trim()
        .parse::<f64>()
        .map_err(|_| row_err(line, format!("cannot parse {column}={raw:?} as a number")))
}

/// Read well records from a CSV file. Parsing does not filter: vertical
/// wells and out-of-range values pass through to [`filter_wells`].
pub fn read_wells(path: &Path) -> Result<Vec<WellRecord>, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(file));

    let headers = reader.headers()?.clone();
    let mut index = BTreeMap::new();
    for (i, name) in headers.iter().enumerate() {
        index.insert(name.to_string(), i);
    }
    let missing: Vec<String> = REQUIRED_COLUMNS
        .iter()
        .filter(|c| !index.contains_key(**c))
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(DatasetError::MissingColumns(missing));
    }
    let col = |name: &str| index[name];

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let get = |name: &str| row.get(col(name)).unwrap_or("");

        let lat_raw = get("lat");
        let lon_raw = get("lon");
        let loc_raw = get("locator");
        let has_latlon = !lat_raw.is_empty() || !lon_raw.is_empty();
        let has_locator = !loc_raw.is_empty();
        let locator = match (has_latlon, has_locator) {
            (true, true) => return Err(row_err(line, "both lat/lon and locator are set; use one")),
            (false, false) => return Err(row_err(line, "neither lat/lon nor locator is set")),
            (true, false) => {
                if lat_raw.is_empty() || lon_raw.is_empty() {
                    return Err(row_err(line, "lat and lon must both be set"));
                }
                let lat = parse_field(lat_raw, "lat", line)?;
                let lon = parse_field(lon_raw, "lon", line)?;
                grid::encode_locator(lat, lon).map_err(|e| row_err(line, e.to_string()))?
            }
            (false, true) => loc_raw
                .parse::<Locator6>()
                .map_err(|e| row_err(line, e.to_string()))?,
        };

        let date: WellDate = get("date").parse().map_err(|e: String| row_err(line, e))?;
        let well_type: WellType = get("well_type").parse().unwrap();

        records.push(WellRecord {
            well_id: get("well_id").to_string(),
            date,
            locator,
            oil: parse_field(get("oil_bbl"), "oil_bbl", line)?,
            water: parse_field(get("water_gal"), "water_gal", line)?,
            sand: parse_field(get("sand_lb"), "sand_lb", line)?,
            lateral: parse_field(get("lateral_ft"), "lateral_ft", line)?,
            well_type,
        });
    }
    Ok(records)
}

/// Write records back out in the input CSV schema (locator form).
pub fn write_wells_csv(path: &Path, records: &[WellRecord]) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut writer = csv::Writer::from_writer(BufWriter::new(file));
    writer.write_record(REQUIRED_COLUMNS)?;
    for rec in records {
        let well_type = match rec.well_type {
            WellType::Horizontal => "horizontal",
            WellType::Vertical => "vertical",
            WellType::Other => "other",
        };
        writer.write_record([
            rec.well_id.as_str(),
            &rec.date.to_string(),
            "",
            "",
            rec.locator.as_str(),
            &rec.oil.to_string(),
            &rec.water.to_string(),
            &rec.sand.to_string(),
            &rec.lateral.to_string(),
            well_type,
        ])?;
    }
    writer.flush().map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(())
}

/// Rejections per filter rule. A record failing several rules increments
/// each matching counter and is dropped once.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionCounts {
    pub not_horizontal: usize,
    pub negative_oil: usize,
    pub negative_water: usize,
    pub negative_sand: usize,
    pub nonpositive_lateral: usize,
}

impl RejectionCounts {
    pub fn total_rules_hit(&self) -> usize {
        self.not_horizontal
            + self.negative_oil
            + self.negative_water
            + self.negative_sand
            + self.nonpositive_lateral
    }
}

/// Keep horizontal wells with non-negative oil/water/sand and positive lateral.
pub fn filter_wells(records: Vec<WellRecord>) -> (Vec<WellRecord>, RejectionCounts) {
    let mut counts = RejectionCounts::default();
    let mut kept = Vec::with_capacity(records.len());
    for rec in records {
        let mut ok = true;
        if rec.well_type != WellType::Horizontal {
            counts.not_horizontal += 1;
            ok = false;
        }
        if rec.oil < 0.0 {
            counts.negative_oil += 1;
            ok = false;
        }
        if rec.water < 0.0 {
            counts.negative_water += 1;
            ok = false;
        }
        if rec.sand < 0.0 {
            counts.negative_sand += 1;
            ok = false;
        }
        if rec.lateral <= 0.0 {
            counts.nonpositive_lateral += 1;
            ok = false;
        }
        if ok {
            kept.push(rec);
        }
    }
    (kept, counts)
}

/// Zeros replaced per variable by [`impute_zeros`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImputationCounts {
    pub oil: usize,
    pub water: usize,
    pub sand: usize,
    pub lateral: usize,
}

fn group_key(loc: &Locator6, grouping: ImputationGrouping) -> String {
    match grouping {
        ImputationGrouping::Prefix4 => grid::prefix4(loc).as_str().to_string(),
        ImputationGrouping::Full6 => loc.as_str().to_string(),
    }
}

/// Replace zero values of each variable by the mean of the strictly positive
/// values in the record's imputation block, falling back to the global
/// positive mean when the block has no positive donors.
type VariableAccess = (
    &'static str,
    fn(&WellRecord) -> f64,
    fn(&mut WellRecord) -> &mut f64,
);

pub fn impute_zeros(
    records: Vec<WellRecord>,
    grouping: ImputationGrouping,
) -> Result<(Vec<WellRecord>, ImputationCounts), DatasetError> {
    let variables: [VariableAccess; 4] = [
        ("oil", |r| r.oil, |r| &mut r.oil),
        ("water", |r| r.water, |r| &mut r.water),
        ("sand", |r| r.sand, |r| &mut r.sand),
        ("lateral", |r| r.lateral, |r| &mut r.lateral),
    ];

    let mut records = records;
    let mut counts = ImputationCounts::default();
    for (name, get, get_mut) in variables {
        let has_zero = records.iter().any(|r| get(r) == 0.0);
        if !has_zero {
            continue;
        }
        let mut block_sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        let mut global_sum = 0.0;
        let mut global_n = 0usize;
        for rec in &records {
            let v = get(rec);
            if v > 0.0 {
                let entry = block_sums
                    .entry(group_key(&rec.locator, grouping))
                    .or_default();
                entry.0 += v;
                entry.1 += 1;
                global_sum += v;
                global_n += 1;
            }
        }
        if global_n == 0 {
            return Err(DatasetError::NoPositiveDonors(name));
        }
        let global_mean = global_sum / global_n as f64;
        for rec in records.iter_mut() {
            if get(rec) != 0.0 {
                continue;
            }
            let fill = block_sums
                .get(&group_key(&rec.locator, grouping))
                .map(|(sum, n)| sum / *n as f64)
                .unwrap_or(global_mean);
            *get_mut(rec) = fill;
            match name {
                "oil" => counts.oil += 1,
                "water" => counts.water += 1,
                "sand" => counts.sand += 1,
                _ => counts.lateral += 1,
            }
        }
    }
    Ok((records, counts))
}

/// Natural log of oil, water, sand, and lateral. All four must be positive,
/// which imputation guarantees when zeros were present.
pub fn log_transform(records: Vec<WellRecord>) -> Result<Vec<WellRecord>, DatasetError> {
    let mut records = records;
    for rec in records.iter_mut() {
        for (name, v) in [
            ("oil", &mut rec.oil),
            ("water", &mut rec.water),
            ("sand", &mut rec.sand),
            ("lateral", &mut rec.lateral),
        ] {
            if *v <= 0.0 {
                return Err(DatasetError::NonPositiveForLog {
                    variable: name,
                    value: *v,
                });
            }
            *v = v.ln();
        }
    }
    Ok(records)
}

/// Water/sand usage intensities on the record's current working scale:
/// combined (W+S)/L, water-only W/L, sand-only S/L. A working lateral of
/// exactly zero (raw lateral 1 under logs) yields zero intensities.
pub fn intensities(rec: &WellRecord) -> (f64, f64, f64) {
    if rec.lateral == 0.0 {
        return (0.0, 0.0, 0.0);
    }
    (
        (rec.water + rec.sand) / rec.lateral,
        rec.water / rec.lateral,
        rec.sand / rec.lateral,
    )
}

/// Standardize to z = (x - mean) / (k * sd) with the sample (n-1) standard
/// deviation, so the output has mean 0 and sd 1/k.
pub fn standardize(values: &[f64], k: u8) -> Result<(Vec<f64>, Standardizer), DatasetError> {
    standardize_named(values, k, "vector")
}

fn standardize_named(
    values: &[f64],
    k: u8,
    name: &str,
) -> Result<(Vec<f64>, Standardizer), DatasetError> {
    let n = values.len();
    if n < 2 {
        return Err(DatasetError::TooShort(n));
    }
    // Two-pass centering keeps the standardized mean at machine precision
    // even when the raw values carry a large offset. The residual is kept
    // as a separate subtraction step so the correction is not lost to the
    // rounding of a single stored mean.
    let rough = values.iter().sum::<f64>() / n as f64;
    let residual = values.iter().map(|v| v - rough).sum::<f64>() / n as f64;
    let var = values
        .iter()
        .map(|v| {
            let c = (v - rough) - residual;
            c * c
        })
        .sum::<f64>()
        / (n - 1) as f64;
    let sd = var.sqrt();
    if sd == 0.0 {
        return Err(DatasetError::ZeroSd(name.to_string()));
    }
    let scale = f64::from(k) * sd;
    let z = values
        .iter()
        .map(|v| ((v - rough) - residual) / scale)
        .collect();
    Ok((
        z,
        Standardizer {
            mean: rough + residual,
            sd,
            k,
        },
    ))
}

/// Per-group arithmetic means; `None` marks an empty group.
pub fn group_averages(values: &[f64], index: &[usize], group_count: usize) -> Vec<Option<f64>> {
    assert_eq!(values.len(), index.len(), "values/index length mismatch");
    let mut sums = vec![0.0; group_count];
    let mut counts = vec![0usize; group_count];
    for (&v, &g) in values.iter().zip(index) {
        assert!(g < group_count, "group index {g} out of range");
        sums[g] += v;
        counts[g] += 1;
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, c)| if c == 0 { None } else { Some(s / c as f64) })
        .collect()
}

fn dense_group_means(values: &[f64], index: &[usize], group_count: usize) -> Vec<f64> {
    group_averages(values, index, group_count)
        .into_iter()
        .map(|m| m.expect("group derived from data cannot be empty"))
        .collect()
}

/// Canonical row order: block code, then date, then well id, then the
/// numeric payload as a final tie-break. Makes the design independent of
/// input file order.
pub(crate) fn canonical_sort(records: &mut [WellRecord]) {
    records.sort_by(|a, b| {
        (a.locator, a.date, &a.well_id)
            .cmp(&(b.locator, b.date, &b.well_id))
            .then_with(|| a.oil.total_cmp(&b.oil))
            .then_with(|| a.water.total_cmp(&b.water))
            .then_with(|| a.sand.total_cmp(&b.sand))
            .then_with(|| a.lateral.total_cmp(&b.lateral))
    });
}

/// Build the model-ready dataset from filtered (and, for the expanded kind,
/// imputed and log-transformed) records.
pub fn build_design(
    records: &[WellRecord],
    policy: PipelinePolicy,
    kind: ModelKind,
) -> Result<PreparedDataset, DatasetError> {
    let n = records.len();
    if n < 2 {
        return Err(DatasetError::TooFewWells(n));
    }
    let mut rows = records.to_vec();
    canonical_sort(&mut rows);

    let mut block_index: BTreeMap<Locator6, usize> = BTreeMap::new();
    for rec in &rows {
        let next = block_index.len();
        block_index.entry(rec.locator).or_insert(next);
    }
    // BTreeMap insertion order is not the dense order; re-number sorted.
    let block_codes: Vec<Locator6> = block_index.keys().copied().collect();
    let block_index: BTreeMap<Locator6, usize> = block_codes
        .iter()
        .enumerate()
        .map(|(i, c)| (*c, i))
        .collect();

    let mut period_set: BTreeMap<Period, usize> = BTreeMap::new();
    for rec in &rows {
        period_set.insert(Period::of(rec.date, policy.time_granularity), 0);
    }
    let time_labels: Vec<Period> = period_set.keys().copied().collect();
    let period_index: BTreeMap<Period, usize> = time_labels
        .iter()
        .enumerate()
        .map(|(i, p)| (*p, i))
        .collect();

    let b = block_codes.len();
    let t = time_labels.len();
    if t < 2 && kind != ModelKind::Spatial {
        return Err(DatasetError::SinglePeriod(kind));
    }

    let block_of: Vec<usize> = rows.iter().map(|r| block_index[&r.locator]).collect();
    let time_of: Vec<usize> = rows
        .iter()
        .map(|r| period_index[&Period::of(r.date, policy.time_granularity)])
        .collect();

    let mut n_per_block = vec![0usize; b];
    for &g in &block_of {
        n_per_block[g] += 1;
    }
    let mut n_per_time = vec![0usize; t];
    for &g in &time_of {
        n_per_time[g] += 1;
    }

    let oil: Vec<f64> = rows.iter().map(|r| r.oil).collect();
    let lateral: Vec<f64> = rows.iter().map(|r| r.lateral).collect();
    let k = policy.scale_k;
    let (y, std_y) = standardize_named(&oil, k, "oil")?;
    let (l, std_l) = standardize_named(&lateral, k, "lateral")?;

    let mut e = Vec::new();
    let mut ew = Vec::new();
    let mut es = Vec::new();
    let mut e_bar_b = Vec::new();
    let mut ew_bar_b = Vec::new();
    let mut es_bar_b = Vec::new();
    let mut ew_bar_t = Vec::new();
    let mut es_bar_t = Vec::new();
    let mut w_bar_b = Vec::new();
    let mut std_e = None;
    let mut std_ew = None;
    let mut std_es = None;
    let mut std_w = None;

    match kind {
        ModelKind::Spatial => {
            let water: Vec<f64> = rows.iter().map(|r| r.water).collect();
            let (w, sw) = standardize_named(&water, k, "water")?;
            w_bar_b = dense_group_means(&w, &block_of, b);
            std_w = Some(sw);
        }
        ModelKind::SpatioTemporal => {
            let raw_e: Vec<f64> = rows.iter().map(|r| intensities(r).0).collect();
            let (ze, se) = standardize_named(&raw_e, k, "intensity")?;
            e_bar_b = dense_group_means(&ze, &block_of, b);
            e = ze;
            std_e = Some(se);
        }
        ModelKind::Expanded => {
            let raw_ew: Vec<f64> = rows.iter().map(|r| intensities(r).1).collect();
            let raw_es: Vec<f64> = rows.iter().map(|r| intensities(r).2).collect();
            let (zew, sew) = standardize_named(&raw_ew, k, "water intensity")?;
            let (zes, ses) = standardize_named(&raw_es, k, "sand intensity")?;
            ew_bar_b = dense_group_means(&zew, &block_of, b);
            es_bar_b = dense_group_means(&zes, &block_of, b);
            ew_bar_t = dense_group_means(&zew, &time_of, t);
            es_bar_t = dense_group_means(&zes, &time_of, t);
            ew = zew;
            es = zes;
            std_ew = Some(sew);
            std_es = Some(ses);
        }
    }

    Ok(PreparedDataset {
        kind,
        policy,
        n,
        b,
        t,
        y,
        l,
        e,
        ew,
        es,
        block_of,
        time_of,
        n_per_block,
        n_per_time,
        e_bar_b,
        ew_bar_b,
        es_bar_b,
        ew_bar_t,
        es_bar_t,
        w_bar_b,
        standardizers: Standardizers {
            y: std_y,
            l: std_l,
            e: std_e,
            ew: std_ew,
            es: std_es,
            w: std_w,
        },
        block_codes,
        time_labels,
    })
}

/// Counts reported alongside a prepared dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub n_input: usize,
    pub n_kept: usize,
    pub rejections: RejectionCounts,
    pub imputation: Option<ImputationCounts>,
    pub n: usize,
    pub b: usize,
    pub t: usize,
}

/// Run the full pipeline for a model kind: filter, optionally impute and
/// log-transform, then build the design.
pub fn prepare(
    records: Vec<WellRecord>,
    policy: PipelinePolicy,
    kind: ModelKind,
) -> Result<(PreparedDataset, PipelineReport), DatasetError> {
    let n_input = records.len();
    let (mut kept, rejections) = filter_wells(records);
    let n_kept = kept.len();
    let mut imputation = None;
    if policy.impute_zeros {
        let (imputed, counts) = impute_zeros(kept, policy.imputation_grouping)?;
        kept = imputed;
        imputation = Some(counts);
    }
    if policy.log_transform {
        kept = log_transform(kept)?;
    }
    let dataset = build_design(&kept, policy, kind)?;
    let report = PipelineReport {
        n_input,
        n_kept,
        rejections,
        imputation,
        n: dataset.n,
        b: dataset.b,
        t: dataset.t,
    };
    Ok((dataset, report))
}
