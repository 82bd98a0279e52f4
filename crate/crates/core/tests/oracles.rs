//! Hand-derived values pinned through the public API.

use approx::assert_relative_eq;
use crowdreview_core::analysis;
use crowdreview_core::estimator::{self, CertaintyPolicy, ScoreSample};
use crowdreview_core::quality::{self, QualityConfig};
use crowdreview_core::sim::{binarize_rating, reward_signal, selection_probabilities};
use crowdreview_core::stats;
use crowdreview_core::table::ReviewRecord;
use crowdreview_core::{AllocationPolicy, PaperId, ReviewTable, UserId};

fn samples(values: &[f64]) -> Vec<ScoreSample> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| ScoreSample::new(UserId(i as u32), v))
        .collect()
}

fn rec(r: u32, p: u32, s: f64) -> ReviewRecord {
    ReviewRecord {
        reviewer: UserId(r),
        paper: PaperId(p),
        score: s,
        confidence: None,
    }
}

#[test]
fn three_reviewer_paper() {
    // Precisions 100, 25, 6.25; total 131.25.
    let sigmas = [0.1, 0.2, 0.4];
    assert_relative_eq!(estimator::msd_simple(&sigmas, 3).unwrap(), 0.21 / 9.0, epsilon = 1e-15);
    assert_relative_eq!(estimator::msd_bayes(&sigmas).unwrap(), 1.0 / 131.25, epsilon = 1e-15);

    let w = estimator::weights_from_sigmas(&sigmas).unwrap();
    assert_relative_eq!(w[0].weight, 100.0 / 131.25, epsilon = 1e-15);
    assert_relative_eq!(w[2].weight, 6.25 / 131.25, epsilon = 1e-15);

    let est = estimator::inverse_variance_mean(&samples(&[0.2, 0.5, 0.9]), &sigmas).unwrap();
    assert_relative_eq!(est.mean, 38.125 / 131.25, epsilon = 1e-15);
    assert_relative_eq!(est.sigma_total.unwrap(), (1.0f64 / 131.25).sqrt(), epsilon = 1e-15);
    assert!(estimator::certainty_gate(est, CertaintyPolicy::default()).unwrap().published);

    let mean = estimator::simple_mean(&samples(&[0.2, 0.5, 0.9]), None).unwrap();
    assert_relative_eq!(mean.mean, 1.6 / 3.0, epsilon = 1e-15);
}

#[test]
fn gate_is_strict() {
    // A single reviewer at exactly the threshold is withheld.
    let est = estimator::inverse_variance_mean(&samples(&[0.5]), &[0.15]).unwrap();
    assert!(!estimator::certainty_gate(est, CertaintyPolicy::default()).unwrap().published);
    // Two such reviewers bring sigma_total to 0.15 / sqrt 2.
    let est = estimator::inverse_variance_mean(&samples(&[0.5, 0.6]), &[0.15, 0.15]).unwrap();
    assert_relative_eq!(est.sigma_total.unwrap(), 0.15 / 2f64.sqrt(), epsilon = 1e-15);
    assert!(estimator::certainty_gate(est, CertaintyPolicy::default()).unwrap().published);
}

#[test]
fn community_averages_and_deviations() {
    // Paper 0: 0.2, 0.4, 0.9 (CAS 0.5). Paper 1: 0.6, 0.8 (CAS 0.7).
    let t = ReviewTable::new(vec![
        rec(0, 0, 0.2),
        rec(1, 0, 0.4),
        rec(2, 0, 0.9),
        rec(0, 1, 0.6),
        rec(1, 1, 0.8),
    ])
    .unwrap();
    let cas = quality::community_average_scores(&t).unwrap();
    assert_relative_eq!(cas.get(PaperId(0)).unwrap().mean, 0.5, epsilon = 1e-15);
    assert_relative_eq!(quality::leave_one_out_cas(&t, UserId(0), PaperId(0)).unwrap(), 0.65, epsilon = 1e-15);
    assert_relative_eq!(quality::leave_one_out_cas(&t, UserId(0), PaperId(1)).unwrap(), 0.8, epsilon = 1e-15);
    // Reviewer 0 deviations: (0.2 - 0.65)² and (0.6 - 0.8)².
    let q = quality::reviewer_msd_from_cas(&t, UserId(0), None, &QualityConfig::default()).unwrap();
    let msd = (0.45f64.powi(2) + 0.2f64.powi(2)) / 2.0;
    assert_relative_eq!(q.msd_from_cas, msd, epsilon = 1e-15);
    assert_relative_eq!(q.sigma_hat, msd.sqrt(), epsilon = 1e-15);
    // Leaving paper 1 out keeps only the first deviation.
    let q = quality::reviewer_msd_from_cas(&t, UserId(0), Some(PaperId(1)), &QualityConfig::default()).unwrap();
    assert_relative_eq!(q.msd_from_cas, 0.45f64.powi(2), epsilon = 1e-15);
    assert_eq!(q.n_deviations, 1);
}

#[test]
fn sigma_floor_applies() {
    let t = ReviewTable::new(vec![rec(0, 0, 0.5), rec(1, 0, 0.5), rec(0, 1, 0.3), rec(1, 1, 0.3)]).unwrap();
    let q = quality::reviewer_msd_from_cas(&t, UserId(0), None, &QualityConfig::default()).unwrap();
    assert_eq!(q.msd_from_cas, 0.0);
    assert_eq!(q.sigma_hat, 0.01);
}

#[test]
fn concentration_examples() {
    assert_relative_eq!(stats::gini(&[0.0, 0.0, 0.0, 4.0]), 0.75, epsilon = 1e-15);
    assert_eq!(stats::gini(&[2.0, 2.0, 2.0]), 0.0);
    let c = analysis::coverage_concentration(&[0, 1, 1, 2]).unwrap();
    assert_relative_eq!(c.max_share, 0.5, epsilon = 1e-15);
    assert_eq!(c.histogram, vec![(0, 1), (1, 2), (2, 1)]);
}

#[test]
fn allocation_weights() {
    // Unreviewed paper, prior variance 1/12, reviewer spread 0.2:
    // 1/12 - 1/(12 + 25) = 25/444.
    assert_relative_eq!(reward_signal(1.0 / 12.0, 0.2), 25.0 / 444.0, epsilon = 1e-15);
    let p = selection_probabilities(AllocationPolicy::Crp, &[0, 1, 3], &[1.0; 3], 0.2);
    assert_eq!(p, vec![1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0]);
    let p = selection_probabilities(AllocationPolicy::Uniform, &[5, 0], &[1.0; 2], 0.2);
    assert_eq!(p, vec![0.5, 0.5]);
}

#[test]
fn binary_threshold_boundary() {
    assert_eq!(binarize_rating(0.5, 0.5).unwrap(), 1.0);
    assert_eq!(binarize_rating(0.4999, 0.5).unwrap(), 0.0);
    assert_eq!(binarize_rating(1.0, 0.5).unwrap(), 1.0);
    assert!(binarize_rating(-0.1, 0.5).is_err());
}

#[test]
fn statistical_tests() {
    // P(X >= 18) for Binomial(20, 1/2) = 211 / 2^20.
    assert_relative_eq!(stats::sign_test_upper(18, 20), 211.0 / 1_048_576.0, epsilon = 1e-12);
    assert_eq!(stats::sign_test_upper(0, 20), 1.0);
    // Perfectly separable classes.
    assert_eq!(stats::best_threshold_balanced_accuracy(&[0.1, 0.2], &[0.8, 0.9]), 1.0);
    assert_eq!(stats::median(&[3.0, 1.0, 2.0, 10.0]), 2.5);
}
