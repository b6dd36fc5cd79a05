//! Two-tailed Mann-Whitney U test with rank-biserial effect size.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Samples at or below this size (both sides, no ties) get an exact p-value.
pub const EXACT_MAX_SIZE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitneyResult {
    /// U for sample A: the number of (a, b) pairs with a > b, ties counting ½.
    pub u_statistic: f64,
    pub p_value: f64,
    /// `2U/(n1·n2) − 1`; +1 when every A exceeds every B.
    pub effect_size_r: f64,
    pub method: PMethod,
}

/// Average ranks (1-based) of `values`, plus the sizes of every tie group.
fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        if j - i > 1 {
            ties.push(j - i);
        }
        i = j;
    }
    (ranks, ties)
}

/// Number of ways each U value in `0..=n1·n2` arises over all `C(n1+n2, n1)` rank splits.
fn u_frequencies(n1: usize, n2: usize) -> Vec<u64> {
    // table[a][b] = frequency vector for sizes (a, b); built up in b then a.
    let mut prev: Vec<Vec<u64>> = (0..=n2).map(|_| vec![1]).collect();
    for a in 1..=n1 {
        let mut cur: Vec<Vec<u64>> = Vec::with_capacity(n2 + 1);
        cur.push(vec![1]);
        for b in 1..=n2 {
            // The largest value belongs to A (contributes b) or to B (contributes 0).
            let mut f = vec![0u64; a * b + 1];
            for (u, &c) in prev[b].iter().enumerate() {
                f[u + b] += c;
            }
            for (u, &c) in cur[b - 1].iter().enumerate() {
                f[u] += c;
            }
            cur.push(f);
        }
        prev = cur;
    }
    prev.swap_remove(n2)
}

/// `2·min(P(U ≤ u), P(U ≥ u))`, capped at 1.
fn exact_p(u: f64, n1: usize, n2: usize) -> f64 {
    let freq = u_frequencies(n1, n2);
    let total: u64 = freq.iter().sum();
    let k = u.round() as usize;
    let lower: u64 = freq[..=k].iter().sum();
    let upper: u64 = freq[k..].iter().sum();
    (2.0 * lower.min(upper) as f64 / total as f64).min(1.0)
}

/// Normal approximation with tie-corrected variance and a 0.5 continuity correction.
fn normal_approx_p(u: f64, n1: usize, n2: usize, ties: &[usize]) -> f64 {
    let n = (n1 + n2) as f64;
    let nn = (n1 * n2) as f64;
    let tie_term = if n > 1.0 {
        ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0))
    } else {
        0.0
    };
    let variance = nn / 12.0 * ((n + 1.0) - tie_term);
    if variance <= 0.0 {
        return 1.0;
    }
    let z = ((u - nn / 2.0).abs() - 0.5).max(0.0) / variance.sqrt();
    (2.0 * Normal::standard().sf(z)).min(1.0)
}

/// Largest pooled size for which the exact null distribution is tabulated.
pub const EXACT_POOLED_LIMIT: usize = 60;

struct Ranked {
    n1: usize,
    n2: usize,
    u: f64,
    ties: Vec<usize>,
}

fn rank_samples(sample_a: &[f64], sample_b: &[f64]) -> Result<Ranked> {
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(Error::validation(
            "Mann-Whitney U needs two non-empty samples",
        ));
    }
    if sample_a.iter().chain(sample_b).any(|x| x.is_nan()) {
        return Err(Error::validation("samples contain NaN"));
    }
    let (n1, n2) = (sample_a.len(), sample_b.len());
    let pooled: Vec<f64> = sample_a.iter().chain(sample_b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let rank_sum_a: f64 = ranks[..n1].iter().sum();
    let u = (rank_sum_a - (n1 * (n1 + 1)) as f64 / 2.0).clamp(0.0, (n1 * n2) as f64);
    Ok(Ranked { n1, n2, u, ties })
}

fn result(r: &Ranked, p_value: f64, method: PMethod) -> MannWhitneyResult {
    MannWhitneyResult {
        u_statistic: r.u,
        p_value,
        effect_size_r: 2.0 * r.u / (r.n1 * r.n2) as f64 - 1.0,
        method,
    }
}

/// Exact test regardless of sample size. Requires tie-free samples with
/// pooled size at most [`EXACT_POOLED_LIMIT`].
pub fn mann_whitney_exact(sample_a: &[f64], sample_b: &[f64]) -> Result<MannWhitneyResult> {
    let r = rank_samples(sample_a, sample_b)?;
    if !r.ties.is_empty() {
        return Err(Error::validation("the exact test needs tie-free samples"));
    }
    if r.n1 + r.n2 > EXACT_POOLED_LIMIT {
        return Err(Error::validation(format!(
            "pooled size {} exceeds the exact limit {EXACT_POOLED_LIMIT}",
            r.n1 + r.n2
        )));
    }
    Ok(result(&r, exact_p(r.u, r.n1, r.n2), PMethod::Exact))
}

/// Exact p when both samples have at most [`EXACT_MAX_SIZE`] values and no
/// ties; otherwise the tie-corrected normal approximation.
pub fn mann_whitney(sample_a: &[f64], sample_b: &[f64]) -> Result<MannWhitneyResult> {
    let r = rank_samples(sample_a, sample_b)?;
    let (n1, n2, u, ties) = (r.n1, r.n2, r.u, &r.ties);
    let (p_value, method) = if n1 <= EXACT_MAX_SIZE && n2 <= EXACT_MAX_SIZE && ties.is_empty() {
        (exact_p(u, n1, n2), PMethod::Exact)
    } else {
        (normal_approx_p(u, n1, n2, ties), PMethod::NormalApprox)
    };
    Ok(result(&r, p_value, method))
}

/// Median with the midpoint convention for even lengths.
pub fn median(sample: &[f64]) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::validation("median of an empty sample"));
    }
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Ok(if v.len().is_multiple_of(2) {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    })
}
