//! Score aggregation kernels.
//!
//! Everything here is a pure function of its inputs. Range enforcement for
//! scores (e.g. the `[0, 1]` platform interval) lives in [`crate::genmodel`];
//! the kernels accept any finite score.

use serde::{Deserialize, Serialize};

use crate::table::UserId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EstimateError {
    #[error("no reviews")]
    NoReviews,
    #[error("sigma at position {index} must be positive and finite, got {value}")]
    NonPositiveSigma { index: usize, value: f64 },
    #[error("score at position {index} is not finite")]
    NonFiniteScore { index: usize },
    #[error("{scores} scores but {sigmas} sigmas")]
    LengthMismatch { scores: usize, sigmas: usize },
    #[error("sigma count {sigmas} does not match n = {n}")]
    CountMismatch { sigmas: usize, n: usize },
    #[error("estimate carries no sigma_total")]
    MissingSigma,
    #[error("certainty bound must be positive and finite, got {0}")]
    InvalidPolicy(f64),
}

/// One reviewer's score for one paper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSample {
    pub value: f64,
    pub reviewer: UserId,
}

impl ScoreSample {
    pub fn new(reviewer: UserId, value: f64) -> Self {
        Self { value, reviewer }
    }
}

/// A reviewer's spread and its normalised weight within one weighting context.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReviewerPrecision {
    pub sigma: f64,
    pub weight: f64,
}

/// Aggregated score of one paper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PaperEstimate {
    pub mean: f64,
    /// Standard deviation of the estimate, when reviewer spreads were known.
    pub sigma_total: Option<f64>,
    pub n_reviews: usize,
    pub published: bool,
}

/// Publish a score only when its total uncertainty is strictly below `sigma_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertaintyPolicy {
    sigma_max: f64,
}

impl CertaintyPolicy {
    pub const DEFAULT_SIGMA_MAX: f64 = 0.15;

    pub fn new(sigma_max: f64) -> Result<Self, EstimateError> {
        if sigma_max > 0.0 && sigma_max.is_finite() {
            Ok(Self { sigma_max })
        } else {
            Err(EstimateError::InvalidPolicy(sigma_max))
        }
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }
}

impl Default for CertaintyPolicy {
    fn default() -> Self {
        Self {
            sigma_max: Self::DEFAULT_SIGMA_MAX,
        }
    }
}

fn check_sigmas(sigmas: &[f64]) -> Result<(), EstimateError> {
    if sigmas.is_empty() {
        return Err(EstimateError::NoReviews);
    }
    for (index, &value) in sigmas.iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(EstimateError::NonPositiveSigma { index, value });
        }
    }
    Ok(())
}

fn check_scores(scores: &[ScoreSample]) -> Result<(), EstimateError> {
    if scores.is_empty() {
        return Err(EstimateError::NoReviews);
    }
    match scores.iter().position(|s| !s.value.is_finite()) {
        Some(index) => Err(EstimateError::NonFiniteScore { index }),
        None => Ok(()),
    }
}

/// Mean squared deviation of the unweighted mean: `Σσ² / n²`.
pub fn msd_simple(sigmas: &[f64], n: usize) -> Result<f64, EstimateError> {
    check_sigmas(sigmas)?;
    if n != sigmas.len() {
        return Err(EstimateError::CountMismatch {
            sigmas: sigmas.len(),
            n,
        });
    }
    let sum_sq: f64 = sigmas.iter().map(|s| s * s).sum();
    Ok(sum_sq / (n * n) as f64)
}

/// Mean squared deviation of the inverse-variance weighted mean: `1 / Σ(1/σ²)`.
pub fn msd_bayes(sigmas: &[f64]) -> Result<f64, EstimateError> {
    check_sigmas(sigmas)?;
    Ok(1.0 / total_precision(sigmas))
}

fn total_precision(sigmas: &[f64]) -> f64 {
    sigmas.iter().map(|s| 1.0 / (s * s)).sum()
}

/// Normalised inverse-variance weights, in input order.
pub fn weights_from_sigmas(sigmas: &[f64]) -> Result<Vec<ReviewerPrecision>, EstimateError> {
    check_sigmas(sigmas)?;
    let total = total_precision(sigmas);
    Ok(sigmas
        .iter()
        .map(|&sigma| ReviewerPrecision {
            sigma,
            weight: (1.0 / (sigma * sigma)) / total,
        })
        .collect())
}

/// Arithmetic mean of the scores.
///
/// `sigma_total` is filled in (as the square root of [`msd_simple`]) only when
/// per-reviewer sigmas are supplied.
pub fn simple_mean(
    scores: &[ScoreSample],
    sigmas: Option<&[f64]>,
) -> Result<PaperEstimate, EstimateError> {
    check_scores(scores)?;
    let n = scores.len();
    let mean = scores.iter().map(|s| s.value).sum::<f64>() / n as f64;
    let sigma_total = match sigmas {
        Some(sigmas) => {
            if sigmas.len() != n {
                return Err(EstimateError::LengthMismatch {
                    scores: n,
                    sigmas: sigmas.len(),
                });
            }
            Some(msd_simple(sigmas, n)?.sqrt())
        }
        None => None,
    };
    Ok(PaperEstimate {
        mean,
        sigma_total,
        n_reviews: n,
        published: false,
    })
}

/// Inverse-variance weighted mean with `sigma_total = sqrt(1 / Σ 1/σ²)`.
pub fn inverse_variance_mean(
    scores: &[ScoreSample],
    sigmas: &[f64],
) -> Result<PaperEstimate, EstimateError> {
    check_scores(scores)?;
    if scores.len() != sigmas.len() {
        return Err(EstimateError::LengthMismatch {
            scores: scores.len(),
            sigmas: sigmas.len(),
        });
    }
    check_sigmas(sigmas)?;
    let total = total_precision(sigmas);
    let weighted: f64 = scores
        .iter()
        .zip(sigmas)
        .map(|(s, sigma)| s.value / (sigma * sigma))
        .sum();
    Ok(PaperEstimate {
        mean: weighted / total,
        sigma_total: Some((1.0 / total).sqrt()),
        n_reviews: scores.len(),
        published: false,
    })
}

/// Marks the estimate published iff `sigma_total < sigma_max`. The mean is untouched.
pub fn certainty_gate(
    estimate: PaperEstimate,
    policy: CertaintyPolicy,
) -> Result<PaperEstimate, EstimateError> {
    let sigma = estimate.sigma_total.ok_or(EstimateError::MissingSigma)?;
    Ok(PaperEstimate {
        published: sigma < policy.sigma_max,
        ..estimate
    })
}

/// Variance of a paper estimate after one more review with spread `sigma_hat`.
pub fn updated_variance(variance: f64, sigma_hat: f64) -> f64 {
    1.0 / (1.0 / variance + 1.0 / (sigma_hat * sigma_hat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn samples(values: &[f64]) -> Vec<ScoreSample> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| ScoreSample::new(UserId(i as u32), v))
            .collect()
    }

    #[test]
    fn simple_mean_examples() {
        assert_relative_eq!(simple_mean(&samples(&[0.4, 0.6]), None).unwrap().mean, 0.5);
        let single = simple_mean(&samples(&[0.7]), None).unwrap();
        assert_eq!(single.mean, 0.7);
        assert_eq!(single.sigma_total, None);
        assert_eq!(simple_mean(&[], None), Err(EstimateError::NoReviews));
        assert_eq!(EstimateError::NoReviews.to_string(), "no reviews");
    }

    #[test]
    fn simple_mean_reports_sigma_when_given() {
        let est = simple_mean(&samples(&[0.2, 0.4]), Some(&[1.0, 2.0])).unwrap();
        assert_relative_eq!(est.sigma_total.unwrap(), 1.25f64.sqrt());
    }

    #[test]
    fn msd_formulas() {
        assert_relative_eq!(msd_simple(&[1.0, 2.0], 2).unwrap(), 1.25);
        assert_relative_eq!(msd_simple(&[0.3], 1).unwrap(), 0.09);
        assert_relative_eq!(msd_simple(&[1.0, 1.0, 1.0], 3).unwrap(), 1.0 / 3.0);
        assert_relative_eq!(msd_bayes(&[1.0, 2.0]).unwrap(), 0.8);
        assert_relative_eq!(msd_bayes(&[1.0, 1.0, 1.0]).unwrap(), 1.0 / 3.0);
        assert_relative_eq!(msd_bayes(&[0.5, 1.0, 2.0]).unwrap(), 1.0 / 5.25, max_relative = 1e-15);
        assert!(matches!(
            msd_bayes(&[1.0, 0.0]),
            Err(EstimateError::NonPositiveSigma { index: 1, .. })
        ));
        assert!(msd_simple(&[-1.0], 1).is_err());
        assert!(msd_simple(&[1.0, 1.0], 3).is_err());
    }

    #[test]
    fn weight_examples() {
        let w: Vec<f64> = weights_from_sigmas(&[1.0, 1.0, 1.0])
            .unwrap()
            .iter()
            .map(|p| p.weight)
            .collect();
        for x in w {
            assert_relative_eq!(x, 1.0 / 3.0);
        }
        let w = weights_from_sigmas(&[0.1, 0.2]).unwrap();
        assert_relative_eq!(w[0].weight, 0.8, max_relative = 1e-12);
        assert_relative_eq!(w[1].weight, 0.2, max_relative = 1e-12);
        assert!(weights_from_sigmas(&[]).is_err());
        assert!(weights_from_sigmas(&[f64::NAN]).is_err());
    }

    #[test]
    fn inverse_variance_examples() {
        let est = inverse_variance_mean(&samples(&[0.4, 0.8]), &[0.1, 0.2]).unwrap();
        assert_relative_eq!(est.mean, 0.48, max_relative = 1e-12);
        assert_relative_eq!(est.sigma_total.unwrap(), (1.0f64 / 125.0).sqrt(), max_relative = 1e-12);

        let s = samples(&[0.1, 0.5, 0.9, 0.3]);
        let ivm = inverse_variance_mean(&s, &[0.3; 4]).unwrap();
        assert_relative_eq!(ivm.mean, simple_mean(&s, None).unwrap().mean, max_relative = 1e-12);

        let one = inverse_variance_mean(&samples(&[0.65]), &[0.2]).unwrap();
        assert_relative_eq!(one.mean, 0.65);
        assert_relative_eq!(one.sigma_total.unwrap(), 0.2);

        assert_eq!(
            inverse_variance_mean(&samples(&[0.1, 0.2]), &[0.1]),
            Err(EstimateError::LengthMismatch { scores: 2, sigmas: 1 })
        );
    }

    #[test]
    fn gate_examples() {
        let policy = CertaintyPolicy::new(0.15).unwrap();
        let est = |s: f64| PaperEstimate {
            mean: 0.4,
            sigma_total: Some(s),
            n_reviews: 3,
            published: false,
        };
        assert!(certainty_gate(est(0.10), policy).unwrap().published);
        assert!(!certainty_gate(est(0.15), policy).unwrap().published);
        assert!(!certainty_gate(est(0.30), policy).unwrap().published);
        assert_eq!(certainty_gate(est(0.10), policy).unwrap().mean, 0.4);
        let bare = PaperEstimate {
            sigma_total: None,
            ..est(0.1)
        };
        assert_eq!(certainty_gate(bare, policy), Err(EstimateError::MissingSigma));
        assert!(CertaintyPolicy::new(0.0).is_err());
        assert_eq!(CertaintyPolicy::default().sigma_max(), 0.15);
    }

    fn sigma_vec() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..10.0, 1..12)
    }

    proptest! {
        #[test]
        fn bayes_never_worse_than_mean(sigmas in sigma_vec()) {
            let n = sigmas.len();
            let simple = msd_simple(&sigmas, n).unwrap();
            let bayes = msd_bayes(&sigmas).unwrap();
            prop_assert!(bayes <= simple * (1.0 + 1e-12));
        }

        #[test]
        fn weights_sum_to_one_and_scale_free(sigmas in sigma_vec(), c in 0.01f64..100.0) {
            let w = weights_from_sigmas(&sigmas).unwrap();
            let sum: f64 = w.iter().map(|p| p.weight).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            let scaled: Vec<f64> = sigmas.iter().map(|s| s * c).collect();
            let ws = weights_from_sigmas(&scaled).unwrap();
            for (a, b) in w.iter().zip(&ws) {
                prop_assert!((a.weight - b.weight).abs() <= 1e-12);
            }
        }

        #[test]
        fn extra_review_reduces_sigma_total(sigmas in sigma_vec(), extra in 0.01f64..1e6) {
            let values = vec![0.5; sigmas.len()];
            let before = inverse_variance_mean(&samples(&values), &sigmas).unwrap();
            let mut more = sigmas.clone();
            more.push(extra);
            let after = inverse_variance_mean(&samples(&vec![0.5; more.len()]), &more).unwrap();
            prop_assert!(after.sigma_total.unwrap() < before.sigma_total.unwrap());
        }

        #[test]
        fn kernels_are_deterministic(sigmas in sigma_vec()) {
            let values: Vec<f64> = (0..sigmas.len()).map(|i| (i as f64 * 0.37).fract()).collect();
            let a = inverse_variance_mean(&samples(&values), &sigmas).unwrap();
            let b = inverse_variance_mean(&samples(&values), &sigmas).unwrap();
            prop_assert_eq!(a.mean.to_bits(), b.mean.to_bits());
            prop_assert_eq!(a.sigma_total.unwrap().to_bits(), b.sigma_total.unwrap().to_bits());
        }
    }
}
