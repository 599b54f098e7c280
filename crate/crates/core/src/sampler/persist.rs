//! On-disk formats for draws and run metadata: a columnar CSV with one
//! column per flat parameter (layout-spec names like `alpha[3]`), preceded
//! by `chain` and `draw` id columns, plus a JSON run manifest.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{ModelKind, PriorConfig};
use crate::sampler::{FitSummary, PosteriorDraws, SamplerConfig};

/// Draws in persistable form: column names plus the flat value matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawsMatrix {
    pub names: Vec<String>,
    pub chains: usize,
    pub draws_per_chain: usize,
    pub dim: usize,
    /// Row-major: chain, then draw, then coordinate.
    pub values: Vec<f64>,
}

impl DrawsMatrix {
    pub fn from_draws(draws: &PosteriorDraws, names: Vec<String>) -> Self {
        assert_eq!(names.len(), draws.dim);
        DrawsMatrix {
            names,
            chains: draws.chains,
            draws_per_chain: draws.draws_per_chain,
            dim: draws.dim,
            values: draws.draws.clone(),
        }
    }

    pub fn draw(&self, chain: usize, index: usize) -> &[f64] {
        let start = (chain * self.draws_per_chain + index) * self.dim;
        &self.values[start..start + self.dim]
    }

    pub fn param_chains(&self, param: usize) -> Vec<Vec<f64>> {
        (0..self.chains)
            .map(|c| {
                (0..self.draws_per_chain)
                    .map(|i| self.draw(c, i)[param])
                    .collect()
            })
            .collect()
    }

    pub fn pooled_param(&self, param: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.chains * self.draws_per_chain);
        for c in 0..self.chains {
            for i in 0..self.draws_per_chain {
                out.push(self.draw(c, i)[param]);
            }
        }
        out
    }

    pub fn total_draws(&self) -> usize {
        self.chains * self.draws_per_chain
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Write draws as CSV: `chain,draw,<param...>` with 0-based chain and draw
/// ids. Floats use the shortest round-trip decimal form.
pub fn write_draws_csv(path: &Path, draws: &DrawsMatrix) -> io::Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    write!(w, "chain,draw")?;
    for name in &draws.names {
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    for chain in 0..draws.chains {
        for i in 0..draws.draws_per_chain {
            write!(w, "{chain},{i}")?;
            for v in draws.draw(chain, i) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
    }
    w.flush()
}

/// Read a draws CSV written by [`write_draws_csv`].
pub fn read_draws_csv(path: &Path) -> io::Result<DrawsMatrix> {
    let file = File::open(path)?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let headers = reader.headers().map_err(io::Error::other)?.clone();
    let mut names: Vec<String> = headers.iter().map(|s| s.to_string()).collect();
    if names.len() < 3 || names[0] != "chain" || names[1] != "draw" {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "draws csv must start with chain,draw columns",
        ));
    }
    names.drain(0..2);
    let dim = names.len();

    let mut values = Vec::new();
    let mut chains = 0usize;
    let mut rows_per_chain: BTreeMap<usize, usize> = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(io::Error::other)?;
        let chain: usize = row
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "bad chain id"))?;
        chains = chains.max(chain + 1);
        *rows_per_chain.entry(chain).or_insert(0) += 1;
        for j in 0..dim {
            let cell = row.get(j + 2).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| {
                io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("bad draw value {cell:?}"),
                )
            })?;
            values.push(v);
        }
    }
    let draws_per_chain = rows_per_chain.values().next().copied().unwrap_or(0);
    if rows_per_chain.len() != chains
        || rows_per_chain.values().any(|&n| n != draws_per_chain)
        || draws_per_chain == 0
    {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            "chains must be contiguous with equal draw counts",
        ));
    }
    Ok(DrawsMatrix {
        names,
        chains,
        draws_per_chain,
        dim,
        values,
    })
}

/// Convergence block of the run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestDiagnostics {
    pub max_rhat: f64,
    pub min_ess: f64,
    pub total_divergences: usize,
    pub divergences_per_chain: Vec<usize>,
    pub rhat_flagged: usize,
    pub step_size: Vec<f64>,
    pub strict_gate_passed: bool,
}

impl ManifestDiagnostics {
    pub fn from_fit(summary: &FitSummary, draws: &PosteriorDraws) -> Self {
        ManifestDiagnostics {
            max_rhat: summary.max_rhat,
            min_ess: summary.min_ess,
            total_divergences: summary.total_divergences,
            divergences_per_chain: draws.divergence_count.clone(),
            rhat_flagged: summary.rhat_flagged,
            step_size: draws.step_size.clone(),
            strict_gate_passed: summary.passes_strict_gate(),
        }
    }
}

/// Reproducibility record written next to every draws file: configuration
/// echo, seed, dimensions, diagnostics, and caller-supplied provenance
/// (paths and content hashes). Deliberately contains no timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub layout_version: String,
    pub kind: ModelKind,
    pub b: usize,
    pub t: usize,
    pub n: usize,
    pub dim: usize,
    pub prior: PriorConfig,
    pub sampler: SamplerConfig,
    pub diagnostics: ManifestDiagnostics,
    pub provenance: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn save_json(&self, path: &Path) -> io::Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        std::fs::write(path, json + "\n")
    }

    pub fn load_json(path: &Path) -> io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(io::Error::other)
    }
}
