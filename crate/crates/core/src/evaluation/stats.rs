use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{ensure, Error, Result};

/// Largest number of non-zero differences evaluated with the exact null distribution.
pub const EXACT_MAX_N: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    Exact,
    Normal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// `min(W+, W-)`.
    pub statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub p_value: f64,
    pub method: PValueMethod,
}

/// Ranks of `|d|` (1-based) with ties sharing their mean rank.
pub fn midranks(abs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..abs.len()).collect();
    idx.sort_by(|&a, &b| abs[a].total_cmp(&abs[b]));
    let mut ranks = vec![0.0; abs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && abs[idx[j + 1]] == abs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        idx[i..=j].iter().for_each(|&k| ranks[k] = r);
        i = j + 1;
    }
    ranks
}

/// Two-sided paired signed-rank test of `a - b`.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    ensure!(a.len() == b.len(), Dimension, "paired samples have lengths {} and {}", a.len(), b.len());
    ensure!(a.len() >= 5, Contract, "signed-rank test needs at least 5 pairs, got {}", a.len());
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    ensure!(d.iter().all(|v| v.is_finite()), Contract, "paired values must be finite");
    let d: Vec<f64> = d.into_iter().filter(|&v| v != 0.0).collect();
    if d.is_empty() {
        return Err(Error::UndefinedTest("all paired differences are zero".into()));
    }
    let n = d.len();
    let ranks = midranks(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;
    let (p, method) = if n <= EXACT_MAX_N {
        (exact_p(&ranks, w_plus), PValueMethod::Exact)
    } else {
        (normal_p(&ranks, w_plus), PValueMethod::Normal)
    };
    Ok(WilcoxonResult { statistic: w_plus.min(w_minus), w_plus, w_minus, n, p_value: p, method })
}

/// Null distribution of `W+` over equally likely sign patterns, counted on doubled ranks
/// (midranks are multiples of 1/2, so doubling makes them integers).
fn exact_p(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max: usize = doubled.iter().sum();
    let mut counts = vec![0u64; max + 1];
    counts[0] = 1;
    for &r in &doubled {
        for s in (r..=max).rev() {
            counts[s] += counts[s - r];
        }
    }
    let obs = (2.0 * w_plus).round() as usize;
    let lower: u64 = counts[..=obs].iter().sum();
    let upper: u64 = counts[obs..].iter().sum();
    let all = 2f64.powi(ranks.len() as i32);
    (2.0 * lower.min(upper) as f64 / all).min(1.0)
}

/// Normal approximation with tie and continuity corrections.
fn normal_p(ranks: &[f64], w_plus: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&r| r == sorted[i]).count();
        let t = j as f64;
        tie += t * t * t - t;
        i += j;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((w_plus - mean).abs() - 0.5).max(0.0) / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2).min(1.0)
}
