//! Small statistics toolbox shared by analysis, simulation reports and the
//! acceptance suite.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, StudentsT};

/// Pearson correlation with its standard error and a two-sided p-value
/// from the usual t approximation with `n - 2` degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub stderr: f64,
    pub n: usize,
    pub p_value: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Plain Pearson r. `None` when fewer than two points or either side is constant.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let mx = mean(xs);
    let my = mean(ys);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Wraps `r` with inference statistics computed at sample size `n`.
pub fn correlation_result(r: f64, n: usize) -> Option<CorrelationResult> {
    if n < 3 {
        return None;
    }
    let df = (n - 2) as f64;
    let one_minus = (1.0 - r * r).max(0.0);
    let stderr = (one_minus / df).sqrt();
    let p_value = if one_minus == 0.0 {
        0.0
    } else {
        let t = r.abs() * (df / one_minus).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
        (2.0 * (1.0 - dist.cdf(t))).clamp(0.0, 1.0)
    };
    Some(CorrelationResult {
        r,
        stderr,
        n,
        p_value,
    })
}

/// Pearson correlation with inference at `n = xs.len()`.
pub fn correlate(xs: &[f64], ys: &[f64]) -> Option<CorrelationResult> {
    pearson(xs, ys).and_then(|r| correlation_result(r, xs.len()))
}

/// 1-based ranks with ties averaged.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    pearson(&average_ranks(xs), &average_ranks(ys))
}

/// Gini coefficient of nonnegative values; 0 for all-equal or all-zero input.
pub fn gini(values: &[f64]) -> f64 {
    let n = values.len();
    let total: f64 = values.iter().sum();
    if n == 0 || total <= 0.0 {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    // G = Σ (2i - n - 1) x_(i) / (n Σx), i = 1..n
    let weighted: f64 = v
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i as f64 + 1.0) - n as f64 - 1.0) * x)
        .sum();
    weighted / (n as f64 * total)
}

/// P(X >= wins) for X ~ Binomial(n, 1/2).
pub fn sign_test_upper(wins: usize, n: usize) -> f64 {
    if wins == 0 {
        return 1.0;
    }
    if n == 0 {
        return 1.0;
    }
    let b = Binomial::new(0.5, n as u64).expect("valid binomial");
    (1.0 - b.cdf(wins as u64 - 1)).clamp(0.0, 1.0)
}

/// Two-sided sign test on paired differences; zero differences are dropped.
pub fn sign_test_two_sided(diffs: &[f64]) -> f64 {
    let pos = diffs.iter().filter(|d| **d > 0.0).count();
    let neg = diffs.iter().filter(|d| **d < 0.0).count();
    let n = pos + neg;
    if n == 0 {
        return 1.0;
    }
    (2.0 * sign_test_upper(pos.max(neg), n)).min(1.0)
}

/// Two-sided paired t-test p-value on differences.
pub fn paired_t_test(diffs: &[f64]) -> f64 {
    let n = diffs.len();
    if n < 2 {
        return 1.0;
    }
    let m = mean(diffs);
    let sd = sample_sd(diffs);
    if sd == 0.0 {
        return if m == 0.0 { 1.0 } else { 0.0 };
    }
    let t = m / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("df > 0");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

/// Best balanced accuracy (mean of the two per-class recalls) achievable by a
/// single threshold on a scalar, trying both orientations.
pub fn best_threshold_balanced_accuracy(class_a: &[f64], class_b: &[f64]) -> f64 {
    if class_a.is_empty() || class_b.is_empty() {
        return f64::NAN;
    }
    let mut all: Vec<(f64, bool)> = class_a
        .iter()
        .map(|&x| (x, true))
        .chain(class_b.iter().map(|&x| (x, false)))
        .collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let na = class_a.len() as f64;
    let nb = class_b.len() as f64;
    // Threshold below everything: all predicted "above".
    let (mut a_below, mut b_below) = (0.0, 0.0);
    let mut best = 0.5f64;
    let mut i = 0;
    while i <= all.len() {
        // a predicted below threshold, b above (and the mirror).
        let acc1 = 0.5 * (a_below / na + (nb - b_below) / nb);
        let acc2 = 0.5 * ((na - a_below) / na + b_below / nb);
        best = best.max(acc1).max(acc2);
        if i == all.len() {
            break;
        }
        let x = all[i].0;
        while i < all.len() && all[i].0 == x {
            if all[i].1 {
                a_below += 1.0;
            } else {
                b_below += 1.0;
            }
            i += 1;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pearson_basic() {
        assert_relative_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 1.0);
        assert_relative_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert_eq!(pearson(&[1.0, 1.0], &[0.0, 1.0]), None);
    }

    #[test]
    fn p_value_known_point() {
        // r = 0.5, n = 12 -> t = 0.5 * sqrt(10 / 0.75) = 1.8257, p ≈ 0.0979
        let c = correlation_result(0.5, 12).unwrap();
        assert!((c.p_value - 0.0979).abs() < 1e-3, "{}", c.p_value);
        assert!(correlation_result(0.5, 2).is_none());
    }

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&[3.0, 3.0, 3.0]), 0.0);
        let p = 5;
        let mut v = vec![0.0; p];
        v[2] = 10.0;
        assert_relative_eq!(gini(&v), (p as f64 - 1.0) / p as f64, max_relative = 1e-12);
    }

    #[test]
    fn sign_tests() {
        // P(X >= 16 | 20) = 6196 / 1048576
        assert_relative_eq!(sign_test_upper(16, 20), 6196.0 / 1048576.0, max_relative = 1e-9);
        assert_eq!(sign_test_upper(0, 20), 1.0);
        assert_relative_eq!(sign_test_two_sided(&[1.0; 10]), 2.0 / 1024.0, max_relative = 1e-9);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[0.2, 0.9, 0.5, 0.5]), vec![1.0, 4.0, 2.5, 2.5]);
    }

    #[test]
    fn balanced_accuracy() {
        assert_eq!(best_threshold_balanced_accuracy(&[0.1, 0.2], &[0.8, 0.9]), 1.0);
        assert_eq!(best_threshold_balanced_accuracy(&[0.8, 0.9], &[0.1, 0.2]), 1.0);
        assert_eq!(best_threshold_balanced_accuracy(&[0.5, 0.5], &[0.5, 0.5]), 0.5);
    }
}
