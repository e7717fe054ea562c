use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::normal_sf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    /// U statistic of the first sample.
    pub u: f64,
    pub p_value: f64,
    pub stars: String,
    pub n_a: usize,
    pub n_b: usize,
    pub method: TestMethod,
}

/// `"***"` below 0.001, `"**"` below 0.01, `"*"` below 0.05, else `"ns"`.
pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        "ns"
    }
}

/// Largest smaller-sample size that takes the exact null distribution.
const EXACT_MAX_SMALL: usize = 8;

/// Two-sided Mann-Whitney U test.
///
/// Exact null enumeration when the smaller sample has at most 8 values and
/// there are no ties; otherwise the normal approximation with tie-corrected
/// variance and a 0.5 continuity correction. Panics on an empty sample.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> ComparisonResult {
    assert!(!a.is_empty() && !b.is_empty(), "Mann-Whitney U needs two non-empty samples");
    let (n, m) = (a.len(), b.len());
    let (ranks, tie_term, has_ties) = midranks(a, b);
    let rank_sum_a: f64 = ranks[..n].iter().sum();
    let u = rank_sum_a - (n * (n + 1)) as f64 / 2.0;

    let exact = !has_ties && n.min(m) <= EXACT_MAX_SMALL && exact_feasible(n, m);
    let (p, method) = if exact {
        (exact_p(u, n, m), TestMethod::Exact)
    } else {
        (normal_p(u, n, m, tie_term), TestMethod::Normal)
    };
    let p_value = p.clamp(0.0, 1.0);
    ComparisonResult {
        u,
        p_value,
        stars: significance_stars(p_value).into(),
        n_a: n,
        n_b: m,
        method,
    }
}

/// Midranks of `a ++ b`, the tie sum `sum(t^3 - t)`, and whether any tie exists.
fn midranks(a: &[f64], b: &[f64]) -> (Vec<f64>, f64, bool) {
    let all: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut order: Vec<usize> = (0..all.len()).collect();
    order.sort_by(|&i, &j| all[i].total_cmp(&all[j]));
    let mut ranks = alloc::vec![0.0; all.len()];
    let mut tie_term = 0.0;
    let mut has_ties = false;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && all[order[j + 1]] == all[order[i]] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        if t > 1.0 {
            has_ties = true;
            tie_term += t * t * t - t;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    (ranks, tie_term, has_ties)
}

fn normal_p(u: f64, n: usize, m: usize, tie_term: f64) -> f64 {
    let (nf, mf) = (n as f64, m as f64);
    let total = nf + mf;
    let mu = nf * mf / 2.0;
    let var = nf * mf / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((u - mu).abs() - 0.5).max(0.0) / libm::sqrt(var);
    2.0 * normal_sf(z)
}

/// Exact counts must fit in `i128`; `C(n + m, min)` is bounded via its logarithm.
fn exact_feasible(n: usize, m: usize) -> bool {
    let k = n.min(m) as f64;
    let total = (n + m) as f64;
    let ln_c = libm::lgamma(total + 1.0) - libm::lgamma(k + 1.0) - libm::lgamma(total - k + 1.0);
    ln_c < 80.0
}

/// Null frequencies of U: coefficients of the Gaussian binomial
/// `[n + m choose k]_q = prod_{i=1..k} (1 - q^{l+i}) / (1 - q^i)` with
/// `k = min(n, m)`, `l = max(n, m)`.
fn u_null_counts(n: usize, m: usize) -> Vec<i128> {
    let (k, l) = if n <= m { (n, m) } else { (m, n) };
    let deg = k * l;
    let mut poly = alloc::vec![0i128; deg + 1];
    poly[0] = 1;
    for i in 1..=k {
        let shift = l + i;
        for d in (shift..=deg).rev() {
            poly[d] -= poly[d - shift];
        }
        for d in i..=deg {
            poly[d] += poly[d - i];
        }
    }
    poly
}

fn exact_p(u: f64, n: usize, m: usize) -> f64 {
    let counts = u_null_counts(n, m);
    let total: i128 = counts.iter().sum();
    let u_int = libm::round(u) as usize;
    let lower: i128 = counts[..=u_int].iter().sum();
    let upper: i128 = counts[u_int..].iter().sum();
    let tail = lower.min(upper) as f64 / total as f64;
    (2.0 * tail).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stars_thresholds() {
        assert_eq!(significance_stars(0.0009), "***");
        assert_eq!(significance_stars(0.001), "**");
        assert_eq!(significance_stars(0.04), "*");
        assert_eq!(significance_stars(0.05), "ns");
    }

    #[test]
    fn null_counts_sum_to_binomial() {
        let c = u_null_counts(5, 5);
        assert_eq!(c.iter().sum::<i128>(), 252);
        assert_eq!(c.len(), 26);
        assert!(c.iter().all(|&x| x >= 0));
        // symmetric distribution
        for u in 0..=25 {
            assert_eq!(c[u], c[25 - u]);
        }
    }

    #[test]
    fn constant_samples() {
        let r = mann_whitney_u(&[3.0; 6], &[3.0; 4]);
        assert_eq!(r.u, 12.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn separated_samples_normal_branch() {
        let a: Vec<f64> = (0..20).map(|i| 100.0 + i as f64).collect();
        let b: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let r = mann_whitney_u(&a, &b);
        assert_eq!(r.method, TestMethod::Normal);
        assert_eq!(r.u, 400.0);
        // z = (200 - 0.5) / sqrt(400 * 41 / 12)
        let z = 199.5 / libm::sqrt(400.0 * 41.0 / 12.0);
        assert!((r.p_value - 2.0 * normal_sf(z)).abs() < 1e-15);
        assert!(r.p_value < 0.001);
        assert_eq!(r.stars, "***");
    }

    #[test]
    fn swapping_preserves_p() {
        let a = [1.0, 4.0, 2.5, 9.0, 7.0];
        let b = [3.0, 5.5, 6.0, 8.0, 0.5, 10.0];
        let x = mann_whitney_u(&a, &b);
        let y = mann_whitney_u(&b, &a);
        assert_eq!(x.u + y.u, 30.0);
        assert!((x.p_value - y.p_value).abs() < 1e-15);
    }
}
