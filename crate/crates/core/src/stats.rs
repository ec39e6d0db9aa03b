//! Summary statistics and the paired Wilcoxon signed-rank test.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Largest number of non-zero differences for which the p-value is computed
/// from the exact null distribution.
pub const EXACT_MAX_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 when undefined.
    pub std: f64,
    /// False for a single observation, where the sample deviation is undefined.
    pub std_defined: bool,
}

pub fn mean_std(values: &[f64]) -> Result<MeanStd> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok(MeanStd { mean, std: 0.0, std_defined: false });
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok(MeanStd { mean, std: libm::sqrt(ss / (n - 1.0)), std_defined: true })
}

/// Per-item metric values for two methods evaluated on the same items.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl PairedSample {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::LengthMismatch { expected: a.len(), actual: b.len() });
        }
        if a.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(v) = a.iter().chain(&b).find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value {v} in paired sample")));
        }
        Ok(Self { a, b })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// `a - b` per pair.
    pub fn differences(&self) -> Vec<f64> {
        self.a.iter().zip(&self.b).map(|(x, y)| x - y).collect()
    }

    pub fn swapped(&self) -> Self {
        Self { a: self.b.clone(), b: self.a.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WilcoxonMode {
    /// Exact null distribution over all sign assignments.
    Exact,
    /// Normal approximation with tie-corrected variance, continuity
    /// correction and an Edgeworth term.
    Normal,
    /// Every difference was zero; there is nothing to test.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// `min(W+, W-)`.
    pub statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Two-sided.
    pub p_value: f64,
    /// Number of non-zero differences.
    pub n_effective: usize,
    pub mode: WilcoxonMode,
    /// Whether tied absolute differences received mid-ranks.
    pub has_ties: bool,
}

/// Two-sided Wilcoxon signed-rank test. Zero differences are discarded;
/// exact when at most [`EXACT_MAX_N`] differences remain, otherwise normal.
pub fn wilcoxon_signed_rank(s: &PairedSample) -> WilcoxonResult {
    wilcoxon_with_mode(s, None)
}

/// Same as [`wilcoxon_signed_rank`] but forcing the normal approximation.
pub fn wilcoxon_signed_rank_normal(s: &PairedSample) -> WilcoxonResult {
    wilcoxon_with_mode(s, Some(WilcoxonMode::Normal))
}

fn wilcoxon_with_mode(s: &PairedSample, force: Option<WilcoxonMode>) -> WilcoxonResult {
    let diffs: Vec<f64> = s.differences().into_iter().filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n == 0 {
        return WilcoxonResult {
            statistic: 0.0,
            w_plus: 0.0,
            w_minus: 0.0,
            p_value: 1.0,
            n_effective: 0,
            mode: WilcoxonMode::Degenerate,
            has_ties: false,
        };
    }

    let ranked = doubled_midranks(&diffs);
    let total2: u64 = ranked.ranks2.iter().sum();
    let plus2: u64 = ranked.ranks2.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let minus2 = total2 - plus2;
    let stat2 = plus2.min(minus2);

    let mode = force.unwrap_or(if n <= EXACT_MAX_N { WilcoxonMode::Exact } else { WilcoxonMode::Normal });
    let p_value = match mode {
        WilcoxonMode::Exact => exact_p(&ranked.ranks2, stat2),
        _ => normal_p(&ranked.ranks2, stat2),
    };
    WilcoxonResult {
        statistic: stat2 as f64 / 2.0,
        w_plus: plus2 as f64 / 2.0,
        w_minus: minus2 as f64 / 2.0,
        p_value,
        n_effective: n,
        mode,
        has_ties: ranked.tie_sizes.iter().any(|&t| t > 1),
    }
}

struct Ranked {
    /// Twice the mid-rank of each |difference|, in input order (always integral).
    ranks2: Vec<u64>,
    /// Size of every group of equal |difference|.
    tie_sizes: Vec<usize>,
}

fn doubled_midranks(diffs: &[f64]) -> Ranked {
    let n = diffs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| libm::fabs(diffs[i]).total_cmp(&libm::fabs(diffs[j])));
    let mut ranks2 = vec![0u64; n];
    let mut tie_sizes = Vec::new();
    let mut start = 0;
    while start < n {
        let value = libm::fabs(diffs[order[start]]);
        let mut end = start + 1;
        while end < n && libm::fabs(diffs[order[end]]) == value {
            end += 1;
        }
        // Ranks start+1 ..= end, mean doubled is start + end + 1.
        let r2 = (start + end + 1) as u64;
        for &i in &order[start..end] {
            ranks2[i] = r2;
        }
        tie_sizes.push(end - start);
        start = end;
    }
    Ranked { ranks2, tie_sizes }
}

/// `P(min(W+, W-) <= observed)` under the null, counting all `2^n` equally
/// likely sign assignments via a subset-sum table over doubled ranks.
fn exact_p(ranks2: &[u64], stat2: u64) -> f64 {
    let total: usize = ranks2.iter().sum::<u64>() as usize;
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in ranks2 {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let assignments = (1u64 << ranks2.len()) as f64;
    let lower: u64 = counts[..=stat2 as usize].iter().sum();
    (2.0 * lower as f64 / assignments).min(1.0)
}

/// Normal approximation to `2 P(W+ <= statistic)` with continuity
/// correction and a fourth-cumulant (Edgeworth) term.
///
/// `W+` is a sum of independent `r_i * Bernoulli(1/2)`, so its variance is
/// `sum r_i^2 / 4` (with mid-ranks this is the tie-corrected variance) and
/// its fourth cumulant is `-sum r_i^4 / 8`. The correction fades out over
/// `2 <= |z| <= 3`; further out it would drive the tail below zero.
fn normal_p(ranks2: &[u64], stat2: u64) -> f64 {
    let r = ranks2.iter().map(|&r2| r2 as f64 / 2.0);
    let mean = r.clone().sum::<f64>() / 2.0;
    let var = r.clone().map(|x| x * x).sum::<f64>() / 4.0;
    let k4 = -r.map(|x| x * x * x * x).sum::<f64>() / 8.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = (stat2 as f64 / 2.0 + 0.5 - mean) / libm::sqrt(var);
    let phi = libm::exp(-z * z / 2.0) / libm::sqrt(2.0 * core::f64::consts::PI);
    let cdf = 0.5 * libm::erfc(-z / core::f64::consts::SQRT_2);
    let fade = (3.0 - libm::fabs(z)).clamp(0.0, 1.0);
    let lower = cdf - fade * k4 / (var * var) / 24.0 * (z * z * z - 3.0 * z) * phi;
    (2.0 * lower).clamp(0.0, 1.0)
}
