//! Brute-force reference implementations shared by the integration tests.
//! Each one recomputes a quantity from its definition, without ranks
//! shortcuts or dynamic programming.

#![allow(dead_code)]

/// Midrank of every value by direct counting.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|&v| {
            let less = values.iter().filter(|&&u| u < v).count() as f64;
            let equal = values.iter().filter(|&&u| u == v).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Pairs with `a_i > b_j` plus half the ties.
pub fn u_pairwise(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for &x in a {
        for &y in b {
            if x > y {
                u += 1.0;
            } else if x == y {
                u += 0.5;
            }
        }
    }
    u
}

/// Two-sided exact Mann-Whitney p-value: every split of the pooled values
/// into groups of the observed sizes is enumerated.
pub fn mw_exact_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (n, n1) = (pooled.len(), a.len());
    let centre = (a.len() * b.len()) as f64 / 2.0;
    let observed = (u_pairwise(a, b) - centre).abs();
    let (mut extreme, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != n1 {
            continue;
        }
        let (ga, gb): (Vec<f64>, Vec<f64>) = {
            let mut ga = Vec::new();
            let mut gb = Vec::new();
            for (i, &v) in pooled.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    ga.push(v);
                } else {
                    gb.push(v);
                }
            }
            (ga, gb)
        };
        total += 1;
        if (u_pairwise(&ga, &gb) - centre).abs() >= observed - 1e-9 {
            extreme += 1;
        }
    }
    extreme as f64 / total as f64
}

/// Negative-rank sum of nonzero differences with midranked magnitudes.
pub fn w_negative(diffs: &[f64]) -> f64 {
    let nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let ranks = midranks(&nz.iter().map(|d| d.abs()).collect::<Vec<_>>());
    nz.iter().zip(&ranks).filter(|(d, _)| **d < 0.0).map(|(_, r)| r).sum()
}

/// Two-sided exact Wilcoxon p-value over all sign patterns of the nonzero
/// magnitudes.
pub fn wilcoxon_exact_p(diffs: &[f64]) -> f64 {
    let mags: Vec<f64> = diffs.iter().filter(|d| **d != 0.0).map(|d| d.abs()).collect();
    let n = mags.len();
    let ranks = midranks(&mags);
    let centre = ranks.iter().sum::<f64>() / 2.0;
    let observed = (w_negative(diffs) - centre).abs();
    let mut extreme = 0u64;
    for mask in 0u32..(1 << n) {
        let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if (w - centre).abs() >= observed - 1e-9 {
            extreme += 1;
        }
    }
    extreme as f64 / (1u64 << n) as f64
}

/// AUC by comparing every positive with every negative.
pub fn auc_pairwise(scores: &[f64], labels: &[u8]) -> f64 {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, l)| **l == 1).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, l)| **l == 0).map(|(s, _)| *s).collect();
    u_pairwise(&pos, &neg) / (pos.len() * neg.len()) as f64
}

/// Kruskal-Wallis H without tie correction, from pooled ranks.
pub fn kruskal_wallis_h(groups: &[Vec<f64>]) -> f64 {
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let ranks = midranks(&pooled);
    let n = pooled.len() as f64;
    let mut offset = 0;
    let mut h = 0.0;
    for g in groups {
        let mean_rank: f64 = ranks[offset..offset + g.len()].iter().sum::<f64>() / g.len() as f64;
        h += g.len() as f64 * (mean_rank - (n + 1.0) / 2.0).powi(2);
        offset += g.len();
    }
    12.0 / (n * (n + 1.0)) * h
}

/// `(1/N) sum w_i bce_i + (l2/2)|theta|^2` straight from the definition,
/// with the probability clamped to `[eps, 1 - eps]`.
pub fn weighted_bce(theta: &[f64], bias: f64, rows: &[Vec<f64>], labels: &[u8], weights: &[f64], l2: f64) -> f64 {
    let eps: f64 = 1e-12;
    let mut total = 0.0;
    for ((x, &y), &w) in rows.iter().zip(labels).zip(weights) {
        let z: f64 = theta.iter().zip(x).map(|(t, v)| t * v).sum::<f64>() + bias;
        // log-space evaluation keeps far-from-boundary samples exact
        let log_p = -(-z).exp().ln_1p();
        let log_q = -z.exp().ln_1p();
        let (lp, lq) = (log_p.max(eps.ln()).min((1.0 - eps).ln()), log_q.max(eps.ln()).min((1.0 - eps).ln()));
        total += w * if y == 1 { -lp } else { -lq };
    }
    total / rows.len() as f64 + l2 / 2.0 * theta.iter().map(|t| t * t).sum::<f64>()
}
