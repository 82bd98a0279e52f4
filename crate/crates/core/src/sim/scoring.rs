//! Turning the review and rating tables into published paper scores.

use std::cell::OnceCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{SimConfig, SimError};
use crate::estimator::{self, CertaintyPolicy, PaperEstimate, ScoreSample};
use crate::genmodel::Agent;
use crate::quality::{self, BinnedSigmas, QualityConfig, QualityError};
use crate::table::{PaperId, RatingTable, ReviewTable, UserId};

/// A paper-scoring route.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Unweighted mean of every review; always published.
    SimpleMean,
    /// Rating-binned sigmas, inverse-variance weighting, certainty gate.
    BayesBinned,
    /// Each reviewer's own leave-one-out deviations as sigma, gated.
    BayesDirectSd,
    /// True spreads, bots dropped, gated.
    Oracle,
    /// True spreads, bots dropped, everything published.
    OracleUngated,
    /// Plain mean of reviews by top-rated reviewers only.
    ThresholdTopPct,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::SimpleMean,
        Method::BayesBinned,
        Method::BayesDirectSd,
        Method::Oracle,
        Method::OracleUngated,
        Method::ThresholdTopPct,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::SimpleMean => "simple_mean",
            Method::BayesBinned => "bayes_binned",
            Method::BayesDirectSd => "bayes_direct_sd",
            Method::Oracle => "oracle",
            Method::OracleUngated => "oracle_ungated",
            Method::ThresholdTopPct => "threshold_top_pct",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| SimError::UnknownMethod(s.to_string()))
    }
}

/// Output of the ratings → bins → sigma pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedOutcome {
    /// Rating mean per reviewer, with unrated reviewers imputed.
    pub means: BTreeMap<UserId, f64>,
    pub sigmas: BinnedSigmas,
    pub n_reference_papers: usize,
    /// The reference subset was empty and every paper was used instead.
    pub reference_fallback: bool,
}

/// Rates reviewers, picks the high-certainty reference papers and bins.
pub fn binned_pipeline(
    reviews: &ReviewTable,
    ratings: &RatingTable,
    cfg: &QualityConfig,
) -> Result<BinnedOutcome, QualityError> {
    let summary = quality::rating_based_quality(ratings);
    let means = quality::rating_means_with_imputation(reviews, &summary);
    let (reference, fallback) =
        match quality::high_certainty_paper_subset(reviews, &means, cfg.top_reviewer_pct, cfg.top_paper_pct) {
            Ok(r) => (r, false),
            Err(QualityError::NoHighCertaintyPapers) => (reviews.papers().collect::<BTreeSet<_>>(), true),
            Err(e) => return Err(e),
        };
    let sigmas = quality::binned_sigma(reviews, &means, &reference, cfg)?;
    Ok(BinnedOutcome {
        means,
        sigmas,
        n_reference_papers: reference.len(),
        reference_fallback: fallback,
    })
}

/// Everything the scoring routes read. Expensive shared pieces are computed once.
pub struct Scorer<'a> {
    pub reviews: &'a ReviewTable,
    pub ratings: &'a RatingTable,
    pub agents: &'a [Agent],
    pub n_papers: usize,
    pub alpha: f64,
    pub policy: CertaintyPolicy,
    pub quality: QualityConfig,
    pub prior_variance: f64,
    binned: OnceCell<Option<BinnedOutcome>>,
}

pub type Estimates = Vec<Option<PaperEstimate>>;

impl<'a> Scorer<'a> {
    pub fn new(
        reviews: &'a ReviewTable,
        ratings: &'a RatingTable,
        agents: &'a [Agent],
        n_papers: usize,
        cfg: &SimConfig,
    ) -> Self {
        Self {
            reviews,
            ratings,
            agents,
            n_papers,
            alpha: cfg.world.alpha,
            policy: cfg.certainty(),
            quality: cfg.quality,
            prior_variance: cfg.prior_variance,
            binned: OnceCell::new(),
        }
    }

    /// The binned pipeline, or `None` when no reviewer had any deviation to bin.
    pub fn binned(&self) -> Option<&BinnedOutcome> {
        self.binned
            .get_or_init(|| binned_pipeline(self.reviews, self.ratings, &self.quality).ok())
            .as_ref()
    }

    fn samples(&self, p: PaperId) -> Vec<ScoreSample> {
        self.reviews
            .paper_records(p)
            .iter()
            .map(|&i| {
                let r = self.reviews.record(i as usize);
                ScoreSample::new(r.reviewer, r.score)
            })
            .collect()
    }

    fn per_paper(&self, mut f: impl FnMut(PaperId) -> Option<PaperEstimate>) -> Estimates {
        (0..self.n_papers)
            .map(|j| {
                let p = PaperId(j as u32);
                if self.reviews.paper_records(p).is_empty() {
                    None
                } else {
                    f(p)
                }
            })
            .collect()
    }

    fn gated(&self, samples: &[ScoreSample], sigmas: &[f64]) -> Option<PaperEstimate> {
        let est = estimator::inverse_variance_mean(samples, sigmas).ok()?;
        estimator::certainty_gate(est, self.policy).ok()
    }

    pub fn score(&self, method: Method) -> Estimates {
        match method {
            Method::SimpleMean => self.per_paper(|p| {
                let est = estimator::simple_mean(&self.samples(p), None).ok()?;
                Some(PaperEstimate { published: true, ..est })
            }),
            Method::BayesBinned => {
                let fallback = self.prior_variance.sqrt();
                let binned = self.binned();
                self.per_paper(|p| {
                    let s = self.samples(p);
                    let sig: Vec<f64> = s
                        .iter()
                        .map(|x| binned.and_then(|b| b.sigmas.sigma(x.reviewer)).unwrap_or(fallback))
                        .collect();
                    self.gated(&s, &sig)
                })
            }
            Method::BayesDirectSd => {
                let direct = quality::direct_sigmas(self.reviews, &self.quality, self.quality.direct_sd_leave_paper_out);
                let fallback = quality::pooled_msd(self.reviews)
                    .map_or(self.prior_variance.sqrt(), |m| self.quality.floor_sigma(m));
                self.per_paper(|p| {
                    let idx = self.reviews.paper_records(p);
                    let sig: Vec<f64> = idx.iter().map(|&i| direct[i as usize].unwrap_or(fallback)).collect();
                    self.gated(&self.samples(p), &sig)
                })
            }
            Method::Oracle | Method::OracleUngated => self.per_paper(|p| {
                let (s, sig): (Vec<ScoreSample>, Vec<f64>) = self
                    .samples(p)
                    .into_iter()
                    .filter_map(|x| {
                        let sigma = self.agents[x.reviewer.index()].true_sigma(self.alpha)?;
                        Some((x, sigma))
                    })
                    .unzip();
                if s.is_empty() {
                    return None;
                }
                if method == Method::Oracle {
                    self.gated(&s, &sig)
                } else {
                    let est = estimator::inverse_variance_mean(&s, &sig).ok()?;
                    Some(PaperEstimate { published: true, ..est })
                }
            }),
            Method::ThresholdTopPct => {
                let keep = self
                    .binned()
                    .map(|b| quality::percentile_threshold_filter(&b.means, self.quality.cutoff_pct))
                    .and_then(Result::ok)
                    .unwrap_or_default();
                self.per_paper(|p| {
                    let s: Vec<ScoreSample> = self.samples(p).into_iter().filter(|x| keep.contains(&x.reviewer)).collect();
                    let est = estimator::simple_mean(&s, None).ok()?;
                    Some(PaperEstimate { published: true, ..est })
                })
            }
        }
    }
}

/// Scores the platform with one method. Convenience wrapper over [`Scorer`].
pub fn score_platform(
    reviews: &ReviewTable,
    ratings: &RatingTable,
    agents: &[Agent],
    n_papers: usize,
    cfg: &SimConfig,
    method: Method,
) -> Estimates {
    Scorer::new(reviews, ratings, agents, n_papers, cfg).score(method)
}
