//! Convergence diagnostics: rank-normalized split R-hat and bulk effective
//! sample size (Vehtari, Gelman, Simpson, Carpenter & Buerkner 2021).
//!
//! Both return `f64::NAN` as the documented sentinel when the input is
//! degenerate (constant draws, too few draws, or a single chain for R-hat).

use crate::stats::{inverse_standard_normal_cdf, mean, sample_variance};

/// Split each chain in half, dropping the middle draw of odd-length chains,
/// after trimming all chains to the shortest length.
fn split_chains(chains: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let shortest = chains.iter().map(|c| c.len()).min()?;
    if shortest < 4 {
        return None;
    }
    let half = shortest / 2;
    let mut out = Vec::with_capacity(chains.len() * 2);
    for chain in chains {
        out.push(chain[..half].to_vec());
        out.push(chain[shortest - half..shortest].to_vec());
    }
    Some(out)
}

/// Replace values by normal quantiles of their pooled fractional ranks,
/// averaging ranks across ties.
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total: usize = chains.iter().map(|c| c.len()).sum();
    let mut indexed: Vec<(f64, usize)> = Vec::with_capacity(total);
    let mut flat_index = 0usize;
    for chain in chains {
        for &v in chain {
            indexed.push((v, flat_index));
            flat_index += 1;
        }
    }
    indexed.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut rank = vec![0.0; total];
    let mut i = 0;
    while i < total {
        let mut j = i;
        while j + 1 < total && indexed[j + 1].0 == indexed[i].0 {
            j += 1;
        }
        // Average rank over the tie run, 1-based.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for item in &indexed[i..=j] {
            rank[item.1] = avg;
        }
        i = j + 1;
    }

    let s = total as f64;
    let mut out = Vec::with_capacity(chains.len());
    let mut k = 0usize;
    for chain in chains {
        let z: Vec<f64> = chain
            .iter()
            .map(|_| {
                let p = (rank[k] - 0.375) / (s + 0.25);
                k += 1;
                inverse_standard_normal_cdf(p)
            })
            .collect();
        out.push(z);
    }
    out
}

fn all_equal(chains: &[Vec<f64>]) -> bool {
    let first = chains.iter().flat_map(|c| c.iter()).next();
    match first {
        None => true,
        Some(&v) => chains.iter().all(|c| c.iter().all(|&x| x == v)),
    }
}

/// Classic potential scale reduction over the given (already split) chains.
fn rhat_of(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len() as f64;
    let n = chains[0].len() as f64;
    let chain_means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let between = n * sample_variance(&chain_means);
    let within = mean(
        &chains
            .iter()
            .map(|c| sample_variance(c))
            .collect::<Vec<f64>>(),
    );
    if !within.is_finite() || within < 1e-300 || m < 2.0 {
        return f64::NAN;
    }
    let var_plus = (n - 1.0) / n * within + between / n;
    (var_plus / within).sqrt()
}

/// Rank-normalized split R-hat for one parameter across chains.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    if chains.len() < 2 {
        return f64::NAN;
    }
    let Some(split) = split_chains(chains) else {
        return f64::NAN;
    };
    if all_equal(&split) {
        return f64::NAN;
    }
    let normalized = rank_normalize(&split);
    rhat_of(&normalized)
}

/// Biased (divisor n) autocovariance sequence of one chain.
fn autocovariance(chain: &[f64]) -> Vec<f64> {
    let n = chain.len();
    let m = mean(chain);
    let centered: Vec<f64> = chain.iter().map(|v| v - m).collect();
    (0..n)
        .map(|lag| {
            let mut sum = 0.0;
            for i in 0..n - lag {
                sum += centered[i] * centered[i + lag];
            }
            sum / n as f64
        })
        .collect()
}

/// Rank-normalized bulk ESS via Geyer-paired autocorrelation sums over split
/// chains, capped at `total * log10(total)`.
pub fn ess_bulk(chains: &[Vec<f64>]) -> f64 {
    let Some(split) = split_chains(chains) else {
        return f64::NAN;
    };
    if all_equal(&split) {
        return f64::NAN;
    }
    let normalized = rank_normalize(&split);

    let m = normalized.len();
    let n = normalized[0].len();
    let acov: Vec<Vec<f64>> = normalized.iter().map(|c| autocovariance(c)).collect();
    let chain_means: Vec<f64> = normalized.iter().map(|c| mean(c)).collect();
    let chain_vars: Vec<f64> = acov
        .iter()
        .map(|a| a[0] * n as f64 / (n as f64 - 1.0))
        .collect();

    let mean_var = mean(&chain_vars);
    let mut var_plus = mean_var * (n as f64 - 1.0) / n as f64;
    if m > 1 {
        var_plus += sample_variance(&chain_means);
    }
    if !var_plus.is_finite() || var_plus < 1e-300 {
        return f64::NAN;
    }

    let mean_acov_at =
        |lag: usize| -> f64 { mean(&acov.iter().map(|a| a[lag]).collect::<Vec<f64>>()) };

    // Geyer initial positive sequence over paired autocorrelations.
    let mut rho_hat = vec![0.0; n];
    let mut rho_even = 1.0;
    rho_hat[0] = rho_even;
    let mut rho_odd = 1.0 - (mean_var - mean_acov_at(1)) / var_plus;
    rho_hat[1] = rho_odd;

    let mut s = 1;
    while s < n.saturating_sub(4) && rho_even + rho_odd > 0.0 {
        rho_even = 1.0 - (mean_var - mean_acov_at(s + 1)) / var_plus;
        rho_odd = 1.0 - (mean_var - mean_acov_at(s + 2)) / var_plus;
        if rho_even + rho_odd >= 0.0 {
            rho_hat[s + 1] = rho_even;
            rho_hat[s + 2] = rho_odd;
        }
        s += 2;
    }
    let max_s = s;
    if rho_even > 0.0 {
        rho_hat[max_s + 1] = rho_even;
    }

    // Initial monotone sequence.
    let mut s = 1;
    while max_s >= 3 && s <= max_s - 3 {
        if rho_hat[s + 1] + rho_hat[s + 2] > rho_hat[s - 1] + rho_hat[s] {
            rho_hat[s + 1] = (rho_hat[s - 1] + rho_hat[s]) / 2.0;
            rho_hat[s + 2] = rho_hat[s + 1];
        }
        s += 2;
    }

    let total = (m * n) as f64;
    let mut tau = -1.0 + 2.0 * rho_hat.iter().take(max_s).sum::<f64>() + rho_hat[max_s + 1];
    // Floor on tau caps ESS at total * log10(total) for antithetic chains.
    tau = tau.max(1.0 / total.log10());
    total / tau
}

/// Monte Carlo standard error of the posterior mean: pooled sd over the
/// square root of the bulk ESS.
pub fn mcse_mean(chains: &[Vec<f64>]) -> f64 {
    let pooled: Vec<f64> = chains.iter().flat_map(|c| c.iter().copied()).collect();
    let sd = sample_variance(&pooled).sqrt();
    sd / ess_bulk(chains).sqrt()
}
