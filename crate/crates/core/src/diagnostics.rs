//! Posterior summaries and convergence diagnostics.
//!
//! R̂ is the rank-normalized split-R̂: chains are split in half, all draws are
//! replaced by normal scores of their average ranks, and the classic
//! between/within variance ratio is computed. Bulk ESS uses the same
//! rank-normalized split chains; tail ESS is the smaller of the ESS of the
//! 5% and 95% quantile indicator sequences. Autocorrelations are summed
//! directly and truncated with Geyer's initial monotone sequence.
//!
//! Quantiles use the median-unbiased interpolation (Hyndman–Fan type 8).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Minimum number of draws per chain accepted by [`summarize`].
pub const MIN_DRAWS: usize = 100;

/// Median-unbiased (type 8) quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty slice");
    if n == 1 {
        return sorted[0];
    }
    let m = (prob + 1.0) / 3.0;
    let h = n as f64 * prob + m;
    let j = h.floor();
    let g = h - j;
    let j = j as isize;
    // 1-based j, clamped to [1, n]
    if j < 1 {
        return sorted[0];
    }
    if j >= n as isize {
        return sorted[n - 1];
    }
    let lo = sorted[(j - 1) as usize];
    let hi = sorted[j as usize];
    (1.0 - g) * lo + g * hi
}

pub fn quantile(values: &[f64], prob: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, prob)
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub name: String,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub mad: f64,
    pub q05: f64,
    pub q95: f64,
    /// NaN when the trace is constant.
    pub rhat: f64,
    pub ess_bulk: f64,
    pub ess_tail: f64,
    /// False when R̂ and ESS are undefined (constant trace).
    pub defined: bool,
}

/// Splits every chain into halves, dropping the middle draw of odd-length chains.
fn split_chains(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    chains
        .iter()
        .flat_map(|c| {
            let n = c.len();
            let half = n / 2;
            [c[..half].to_vec(), c[n - half..].to_vec()]
        })
        .collect()
}

/// Normal scores of the pooled average ranks, `Φ⁻¹((r − 3/8)/(S + 1/4))`.
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total: usize = chains.iter().map(Vec::len).sum();
    let mut idx: Vec<(f64, usize, usize)> = chains
        .iter()
        .enumerate()
        .flat_map(|(c, v)| v.iter().enumerate().map(move |(i, &x)| (x, c, i)))
        .collect();
    idx.sort_by(|a, b| a.0.total_cmp(&b.0));
    let normal = Normal::standard();
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && idx[end].0 == idx[start].0 {
            end += 1;
        }
        // ranks start..end (1-based start+1..=end) share their average
        let rank = (start + 1 + end) as f64 / 2.0;
        let z = normal.inverse_cdf((rank - 0.375) / (total as f64 + 0.25));
        for &(_, c, i) in &idx[start..end] {
            out[c][i] = z;
        }
        start = end;
    }
    out
}

/// Classic R̂ from between- and within-chain variances of equal-length chains.
fn rhat_basic(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let within = mean(&chains.iter().map(|c| var(c)).collect::<Vec<_>>());
    let between = if chains.len() > 1 { n * var(&means) } else { 0.0 };
    let var_plus = (n - 1.0) / n * within + between / n;
    (var_plus / within).sqrt()
}

/// Biased autocovariance of `x` at `lag`.
fn autocov(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    x[..n - lag]
        .iter()
        .zip(&x[lag..])
        .map(|(a, b)| (a - m) * (b - m))
        .sum::<f64>()
        / n as f64
}

/// Multi-chain ESS with Geyer's initial positive and monotone sequence.
fn ess_basic(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains[0].len();
    if n < 3 {
        return f64::NAN;
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let mean_acov = |lag: usize| -> f64 {
        chains
            .iter()
            .zip(&means)
            .map(|(c, &mu)| autocov(c, mu, lag))
            .sum::<f64>()
            / m as f64
    };
    let nf = n as f64;
    let mean_var = mean_acov(0) * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += var(&means);
    }
    if !(var_plus > 0.0) {
        return f64::NAN;
    }
    let rho = |lag: usize| 1.0 - (mean_var - mean_acov(lag)) / var_plus;

    let mut rho_hat = vec![0.0; n];
    rho_hat[0] = 1.0;
    let mut even = 1.0;
    let mut odd = rho(1);
    rho_hat[1] = odd;
    let mut t = 0;
    while t + 5 < n && (even + odd) > 0.0 && !(even + odd).is_nan() {
        t += 2;
        even = rho(t);
        odd = rho(t + 1);
        if even + odd >= 0.0 {
            rho_hat[t] = even;
            rho_hat[t + 1] = odd;
        }
    }
    let max_t = t;
    if even > 0.0 {
        rho_hat[max_t] = even;
    }
    // initial monotone sequence
    let mut t = 0;
    while t + 4 <= max_t {
        t += 2;
        if rho_hat[t] + rho_hat[t + 1] > rho_hat[t - 2] + rho_hat[t - 1] {
            rho_hat[t] = (rho_hat[t - 2] + rho_hat[t - 1]) / 2.0;
            rho_hat[t + 1] = rho_hat[t];
        }
    }
    let total = (m * n) as f64;
    let mut tau = -1.0 + 2.0 * rho_hat[..max_t].iter().sum::<f64>() + rho_hat[max_t];
    tau = tau.max(1.0 / total.log10());
    total / tau
}

fn indicator(chains: &[Vec<f64>], threshold: f64) -> Vec<Vec<f64>> {
    chains
        .iter()
        .map(|c| c.iter().map(|&x| if x <= threshold { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Summary statistics and diagnostics of one scalar parameter across chains.
pub fn summarize(name: &str, chains: &[Vec<f64>]) -> Result<SummaryRow> {
    if chains.is_empty() {
        return Err(Error::InsufficientSamples {
            needed: 1,
            got: 0,
        });
    }
    let len = chains[0].len();
    if let Some(c) = chains.iter().find(|c| c.len() != len) {
        return Err(Error::DimensionMismatch {
            expected: len,
            got: c.len(),
            context: "chains must have equal length",
        });
    }
    if len < MIN_DRAWS {
        return Err(Error::InsufficientSamples {
            needed: MIN_DRAWS,
            got: len,
        });
    }
    let mut pooled: Vec<f64> = chains.iter().flatten().copied().collect();
    let mean_all = mean(&pooled);
    let sd = var(&pooled).sqrt();
    pooled.sort_by(f64::total_cmp);
    let median = quantile_sorted(&pooled, 0.5);
    let q05 = quantile_sorted(&pooled, 0.05);
    let q95 = quantile_sorted(&pooled, 0.95);
    let mut dev: Vec<f64> = pooled.iter().map(|x| (x - median).abs()).collect();
    dev.sort_by(f64::total_cmp);
    let mad = 1.4826 * quantile_sorted(&dev, 0.5);

    let constant = pooled[0] == pooled[pooled.len() - 1];
    let (rhat, ess_bulk, ess_tail) = if constant {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        let split = split_chains(chains);
        let z = rank_normalize(&split);
        let rhat = rhat_basic(&z);
        let ess_bulk = ess_basic(&z);
        let tail_lo = ess_basic(&indicator(&split, q05));
        let tail_hi = ess_basic(&indicator(&split, q95));
        (rhat, ess_bulk, tail_lo.min(tail_hi))
    };
    Ok(SummaryRow {
        name: name.to_string(),
        mean: mean_all,
        median,
        sd,
        mad,
        q05,
        q95,
        rhat,
        ess_bulk,
        ess_tail,
        defined: !constant,
    })
}

pub const TABLE_COLUMNS: [&str; 10] = [
    "name", "mean", "median", "sd", "mad", "q5", "q95", "rhat", "ess_bulk", "ess_tail",
];

/// Writes rows as CSV with the [`TABLE_COLUMNS`] header.
pub fn write_csv<W: std::io::Write>(rows: &[SummaryRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(TABLE_COLUMNS)?;
    for r in rows {
        wtr.write_record([
            r.name.clone(),
            r.mean.to_string(),
            r.median.to_string(),
            r.sd.to_string(),
            r.mad.to_string(),
            r.q05.to_string(),
            r.q95.to_string(),
            r.rhat.to_string(),
            r.ess_bulk.to_string(),
            r.ess_tail.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Fixed-width text table.
pub fn format_table(rows: &[SummaryRow]) -> String {
    let name_w = rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    let mut s = format!("{:>name_w$}", "");
    for c in &TABLE_COLUMNS[1..] {
        let _ = write!(s, " {c:>10}");
    }
    s.push('\n');
    for r in rows {
        let _ = write!(s, "{:>name_w$}", r.name);
        for v in [r.mean, r.median, r.sd, r.mad, r.q05, r.q95, r.rhat] {
            let _ = write!(s, " {v:>10.2}");
        }
        for v in [r.ess_bulk, r.ess_tail] {
            let _ = write!(s, " {v:>10.2}");
        }
        s.push('\n');
    }
    s
}
