//! Nonparametric and paired hypothesis tests.
//!
//! All p-values are two-sided. Ties get midranks, and the normal
//! approximations carry the usual tie correction of the variance. For small
//! samples the Mann–Whitney and Wilcoxon tests use the exact permutation
//! distribution of the (doubled, hence integral) rank sum, built by dynamic
//! programming over the observed ranks so midranks are handled exactly.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Largest pooled sample size (Mann–Whitney) or number of nonzero
/// differences (Wilcoxon) for which [`PValueMethod::Auto`] uses the exact
/// distribution.
pub const EXACT_CUTOFF: usize = 12;

/// Upper limit for explicitly requested exact p-values; counts stay in `u64`.
const EXACT_LIMIT: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    MannWhitneyU,
    KruskalWallis,
    WilcoxonSignedRank,
    PairedT,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PValueMethod {
    /// Exact up to [`EXACT_CUTOFF`], normal approximation above.
    #[default]
    Auto,
    Exact,
    Normal,
}

/// Outcome of a hypothesis test.
///
/// `n1`/`n2` are the two sample sizes for Mann–Whitney, the total sample
/// size and group count for Kruskal–Wallis, the number of nonzero
/// differences (and 0) for Wilcoxon, and the number of pairs (twice) for the
/// paired t-test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub method: TestMethod,
    pub statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
    pub exact: bool,
}

/// Midranks (1-based) of `values` and the sizes of every tie group.
pub fn midranks(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    let mut ranks = vec![0.0; values.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end share ranks start+1..=end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        ties.push(end - start);
        start = end;
    }
    (ranks, ties)
}

fn tie_sum(ties: &[usize]) -> f64 {
    ties.iter()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum()
}

fn check_finite(name: &str, xs: &[f64]) -> Result<()> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::Validation(format!("{name} contains non-finite values")));
    }
    Ok(())
}

fn normal_two_sided(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Number of `k`-subsets of `items` with each attainable sum; `items` are
/// non-negative integers.
fn subset_sum_counts(items: &[u64], k: Option<usize>) -> Vec<Vec<u64>> {
    let total: u64 = items.iter().sum();
    let max_k = k.unwrap_or(items.len());
    // counts[j][s]: subsets of size j with sum s
    let mut counts = vec![vec![0u64; total as usize + 1]; max_k + 1];
    counts[0][0] = 1;
    for (seen, &item) in items.iter().enumerate() {
        let upper = max_k.min(seen + 1);
        for j in (1..=upper).rev() {
            for s in (item as usize..=total as usize).rev() {
                let prev = counts[j - 1][s - item as usize];
                if prev != 0 {
                    counts[j][s] += prev;
                }
            }
        }
    }
    counts
}

/// Two-sided tail mass `P(|S - centre| >= |observed - centre|)` on doubled sums.
fn two_sided_tail(dist: &[u64], observed: u64, centre2: i128) -> f64 {
    let total: u64 = dist.iter().sum();
    let obs_dev = (2 * observed as i128 - centre2).abs();
    let extreme: u64 = dist
        .iter()
        .enumerate()
        .filter(|(s, _)| (2 * *s as i128 - centre2).abs() >= obs_dev)
        .map(|(_, &c)| c)
        .sum();
    (extreme as f64 / total as f64).clamp(0.0, 1.0)
}

/// Mann–Whitney U test of `a` against `b` with automatic p-value method.
///
/// The statistic is `U_a = R_a - n1(n1+1)/2`, the number of pairs with
/// `a_i > b_j` plus half the ties, so `U(a, b) + U(b, a) = n1 n2`.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<TestResult> {
    mann_whitney_u_with(a, b, PValueMethod::Auto)
}

pub fn mann_whitney_u_with(a: &[f64], b: &[f64], method: PValueMethod) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Validation("Mann-Whitney U needs two non-empty samples".into()));
    }
    check_finite("sample a", a)?;
    check_finite("sample b", b)?;

    let (n1, n2) = (a.len(), b.len());
    let n = n1 + n2;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let rank_sum_a: f64 = ranks[..n1].iter().sum();
    let u = rank_sum_a - (n1 * (n1 + 1)) as f64 / 2.0;

    let exact = match method {
        PValueMethod::Auto => n <= EXACT_CUTOFF,
        PValueMethod::Exact => {
            if n > EXACT_LIMIT {
                return Err(Error::Parameter(format!(
                    "exact Mann-Whitney p-value limited to {EXACT_LIMIT} pooled samples"
                )));
            }
            true
        }
        PValueMethod::Normal => false,
    };

    let p_value = if exact {
        let doubled: Vec<u64> = ranks.iter().map(|r| (2.0 * r).round() as u64).collect();
        let counts = subset_sum_counts(&doubled, Some(n1));
        let observed = (2.0 * rank_sum_a).round() as u64;
        // E[2 R_a] = n1 (n + 1)
        let centre2 = 2 * (n1 * (n + 1)) as i128;
        two_sided_tail(&counts[n1], observed, centre2)
    } else {
        let mean = (n1 * n2) as f64 / 2.0;
        let var = mw_variance(n1, n2, &ties);
        if var <= 0.0 {
            1.0
        } else {
            let dev = ((u - mean).abs() - 0.5).max(0.0);
            normal_two_sided(dev / var.sqrt())
        }
    };

    Ok(TestResult {
        method: TestMethod::MannWhitneyU,
        statistic: u,
        p_value,
        n1,
        n2,
        exact,
    })
}

fn mw_variance(n1: usize, n2: usize, ties: &[usize]) -> f64 {
    let n = (n1 + n2) as f64;
    let (n1, n2) = (n1 as f64, n2 as f64);
    n1 * n2 / 12.0 * ((n + 1.0) - tie_sum(ties) / (n * (n - 1.0)))
}

/// Signed, tie-corrected normal statistic of the Mann–Whitney U without
/// continuity correction. Squared, it equals the two-group Kruskal–Wallis H.
pub fn mann_whitney_z(a: &[f64], b: &[f64]) -> Result<f64> {
    let res = mann_whitney_u_with(a, b, PValueMethod::Normal)?;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (_, ties) = midranks(&pooled);
    let var = mw_variance(a.len(), b.len(), &ties);
    if var <= 0.0 {
        return Ok(0.0);
    }
    let mean = (a.len() * b.len()) as f64 / 2.0;
    Ok((res.statistic - mean) / var.sqrt())
}

/// Kruskal–Wallis H test over `groups`, tie corrected, with a chi-squared
/// p-value on `k - 1` degrees of freedom. All-identical input gives `H = 0`
/// and `p = 1`.
pub fn kruskal_wallis(groups: &[&[f64]]) -> Result<TestResult> {
    if groups.len() < 2 {
        return Err(Error::Validation("Kruskal-Wallis needs at least two groups".into()));
    }
    if let Some(i) = groups.iter().position(|g| g.is_empty()) {
        return Err(Error::Validation(format!("Kruskal-Wallis group {i} is empty")));
    }
    for g in groups {
        check_finite("group", g)?;
    }
    let k = groups.len();
    let pooled: Vec<f64> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    let n = pooled.len() as f64;
    let (ranks, ties) = midranks(&pooled);

    let correction = 1.0 - tie_sum(&ties) / (n * n * n - n);
    let statistic = if correction <= 0.0 {
        0.0
    } else {
        let mut offset = 0;
        let mut weighted = 0.0;
        for g in groups {
            let r: f64 = ranks[offset..offset + g.len()].iter().sum();
            weighted += r * r / g.len() as f64;
            offset += g.len();
        }
        let h = 12.0 / (n * (n + 1.0)) * weighted - 3.0 * (n + 1.0);
        (h / correction).max(0.0)
    };
    let p_value = if statistic == 0.0 {
        1.0
    } else {
        let chi = ChiSquared::new((k - 1) as f64).expect("k >= 2");
        chi.sf(statistic).clamp(0.0, 1.0)
    };
    Ok(TestResult {
        method: TestMethod::KruskalWallis,
        statistic,
        p_value,
        n1: pooled.len(),
        n2: k,
        exact: false,
    })
}

/// Wilcoxon signed-rank test on paired differences.
///
/// Zero differences are dropped; the statistic is the rank sum of the
/// negative differences.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> Result<TestResult> {
    wilcoxon_signed_rank_with(diffs, PValueMethod::Auto)
}

pub fn wilcoxon_signed_rank_with(diffs: &[f64], method: PValueMethod) -> Result<TestResult> {
    check_finite("differences", diffs)?;
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    if nonzero.is_empty() {
        return Err(Error::Degenerate("all paired differences are zero".into()));
    }
    let n = nonzero.len();
    let magnitudes: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let (ranks, ties) = midranks(&magnitudes);
    let w_neg: f64 = ranks
        .iter()
        .zip(&nonzero)
        .filter(|(_, d)| **d < 0.0)
        .fold(0.0, |acc, (r, _)| acc + r);

    let exact = match method {
        PValueMethod::Auto => n <= EXACT_CUTOFF,
        PValueMethod::Exact => {
            if n > EXACT_LIMIT {
                return Err(Error::Parameter(format!(
                    "exact Wilcoxon p-value limited to {EXACT_LIMIT} differences"
                )));
            }
            true
        }
        PValueMethod::Normal => false,
    };

    let p_value = if exact {
        let doubled: Vec<u64> = ranks.iter().map(|r| (2.0 * r).round() as u64).collect();
        let total: u64 = doubled.iter().sum();
        let by_size = subset_sum_counts(&doubled, None);
        let mut dist = vec![0u64; total as usize + 1];
        for row in &by_size {
            for (s, c) in row.iter().enumerate() {
                dist[s] += c;
            }
        }
        let observed = (2.0 * w_neg).round() as u64;
        two_sided_tail(&dist, observed, total as i128)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_sum(&ties) / 48.0;
        if var <= 0.0 {
            1.0
        } else {
            let dev = ((w_neg - mean).abs() - 0.5).max(0.0);
            normal_two_sided(dev / var.sqrt())
        }
    };

    Ok(TestResult {
        method: TestMethod::WilcoxonSignedRank,
        statistic: w_neg,
        p_value,
        n1: n,
        n2: 0,
        exact,
    })
}

/// Paired Student t-test on `x - y`.
pub fn paired_t_test(x: &[f64], y: &[f64]) -> Result<TestResult> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::Validation("paired t-test needs at least two pairs".into()));
    }
    check_finite("x", x)?;
    check_finite("y", y)?;
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if sd <= 16.0 * f64::EPSILON * scale || sd == 0.0 {
        return Err(Error::Degenerate(
            "paired differences have zero variance".into(),
        ));
    }
    let t = mean / (sd / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("df >= 1");
    let p_value = (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0);
    Ok(TestResult {
        method: TestMethod::PairedT,
        statistic: t,
        p_value,
        n1: d.len(),
        n2: d.len(),
        exact: false,
    })
}
