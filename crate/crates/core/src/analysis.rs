//! Statistics over review tables: reviewer agreement, per-reviewer score
//! normalisations, confidence strata, authorship vs. reviewing quality, and
//! concentration of reviews across papers.
//!
//! Pairwise correlations enumerate every unordered pair of reviews on the
//! same paper and enter each pair in both orders, so the result does not
//! depend on which reviewer is listed first. The sample size reported with a
//! correlation is the number of unordered pairs.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::quality::{self, QualityConfig, QualityError};
use crate::stats::{self, CorrelationResult};
use crate::table::{Authorship, ReviewRecord, ReviewTable, UserId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("no paper has two or more reviews")]
    NoMultiReviewPapers,
    #[error("correlation undefined: {0}")]
    Undefined(&'static str),
    #[error("table has no confidence column")]
    MissingConfidence,
    #[error("need at least 3 users who both author and review, found {0}")]
    InsufficientDualRole(usize),
    #[error("no review counts given")]
    EmptyCounts,
    #[error("unknown normalisation {0:?} (expected zscore, rank, mean_removal, distribution_inversion)")]
    UnknownNormalization(String),
    #[error("invalid percentile group [{0}, {1}]")]
    InvalidGroup(f64, f64),
    #[error(transparent)]
    Quality(#[from] QualityError),
}

/// One flat output row, ready for serialisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub n: Option<usize>,
    pub group: Option<String>,
}

impl MetricRow {
    pub fn scalar(metric: impl Into<String>, value: f64) -> Self {
        Self {
            metric: metric.into(),
            value,
            stderr: None,
            n: None,
            group: None,
        }
    }

    pub fn correlation(metric: impl Into<String>, c: &CorrelationResult) -> Self {
        Self {
            metric: metric.into(),
            value: c.r,
            stderr: Some(c.stderr),
            n: Some(c.n),
            group: None,
        }
    }

    pub fn in_group(mut self, group: impl Into<String>) -> Self {
        self.group = Some(group.into());
        self
    }
}

/// Symmetrised score pairs for every unordered pair of reviews of a paper
/// accepted by `keep`. Returns the stacked vectors and the unordered count.
fn symmetric_pairs(
    table: &ReviewTable,
    mut keep: impl FnMut(&ReviewRecord, &ReviewRecord) -> bool,
) -> (Vec<f64>, Vec<f64>, usize) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut n = 0;
    for p in table.papers() {
        let idx = table.paper_records(p);
        for (k, &i) in idx.iter().enumerate() {
            for &j in &idx[k + 1..] {
                let a = table.record(i as usize);
                let b = table.record(j as usize);
                if !keep(a, b) {
                    continue;
                }
                xs.extend([a.score, b.score]);
                ys.extend([b.score, a.score]);
                n += 1;
            }
        }
    }
    (xs, ys, n)
}

fn pair_correlation(xs: &[f64], ys: &[f64], n_pairs: usize) -> Option<CorrelationResult> {
    stats::pearson(xs, ys).and_then(|r| stats::correlation_result(r, n_pairs))
}

/// Correlation between scores two reviewers gave the same paper.
pub fn pairwise_reviewer_correlation(table: &ReviewTable) -> Result<CorrelationResult, AnalysisError> {
    let (xs, ys, n) = symmetric_pairs(table, |_, _| true);
    if n == 0 {
        return Err(AnalysisError::NoMultiReviewPapers);
    }
    pair_correlation(&xs, &ys, n).ok_or(AnalysisError::Undefined("constant scores or fewer than 3 pairs"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    ZScore,
    Rank,
    MeanRemoval,
    DistributionInversion,
}

impl Normalization {
    pub const ALL: [Normalization; 4] = [
        Normalization::ZScore,
        Normalization::Rank,
        Normalization::MeanRemoval,
        Normalization::DistributionInversion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Normalization::ZScore => "zscore",
            Normalization::Rank => "rank",
            Normalization::MeanRemoval => "mean_removal",
            Normalization::DistributionInversion => "distribution_inversion",
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Normalization {
    type Err = AnalysisError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Normalization::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| AnalysisError::UnknownNormalization(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationFlag {
    /// Too few reviews to normalise; scores passed through.
    Passthrough,
    /// Zero spread under z-scoring; scores set to 0.
    ZeroSpread,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub table: ReviewTable,
    pub flags: BTreeMap<UserId, NormalizationFlag>,
}

/// Per-reviewer transform of every score. Keys and record order are kept.
///
/// `rank` maps to `r / n` and `distribution_inversion` to `(r - 0.5) / n`,
/// where `r` is the tie-averaged rank among the reviewer's own scores.
pub fn normalize_scores(table: &ReviewTable, method: Normalization) -> Normalized {
    let mut scores: Vec<f64> = table.records().iter().map(|r| r.score).collect();
    let mut flags = BTreeMap::new();
    for u in table.reviewers() {
        let idx = table.reviewer_records(u);
        let own: Vec<f64> = idx.iter().map(|&i| scores[i as usize]).collect();
        let n = own.len();
        if n < 2 && method != Normalization::MeanRemoval {
            flags.insert(u, NormalizationFlag::Passthrough);
            continue;
        }
        let m = stats::mean(&own);
        let out: Vec<f64> = match method {
            Normalization::MeanRemoval => own.iter().map(|s| s - m).collect(),
            Normalization::ZScore => {
                let sd = (own.iter().map(|s| (s - m).powi(2)).sum::<f64>() / n as f64).sqrt();
                if sd > 0.0 {
                    own.iter().map(|s| (s - m) / sd).collect()
                } else {
                    flags.insert(u, NormalizationFlag::ZeroSpread);
                    vec![0.0; n]
                }
            }
            Normalization::Rank => stats::average_ranks(&own).iter().map(|r| r / n as f64).collect(),
            Normalization::DistributionInversion => stats::average_ranks(&own)
                .iter()
                .map(|r| (r - 0.5) / n as f64)
                .collect(),
        };
        for (&i, v) in idx.iter().zip(out) {
            scores[i as usize] = v;
        }
    }
    Normalized {
        table: table.with_scores(&scores),
        flags,
    }
}

/// Correlation among pairs whose lower confidence equals `level`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceStratum {
    pub level: f64,
    pub n_pairs: usize,
    /// `None` when the stratum has fewer than 3 pairs or constant scores.
    pub result: Option<CorrelationResult>,
    /// Fraction of all reviews reported at this confidence.
    pub review_share: f64,
}

/// Pairwise correlation split by the smaller of the two confidences.
pub fn confidence_stratified_correlation(table: &ReviewTable) -> Result<Vec<ConfidenceStratum>, AnalysisError> {
    if !table.has_confidence() {
        return Err(AnalysisError::MissingConfidence);
    }
    let conf = |r: &ReviewRecord| r.confidence.unwrap_or(f64::NAN);
    let mut levels: Vec<f64> = table
        .records()
        .iter()
        .map(conf)
        .filter(|c| c.is_finite())
        .collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let total = table.len() as f64;
    Ok(levels
        .into_iter()
        .map(|level| {
            let (xs, ys, n) = symmetric_pairs(table, |a, b| conf(a).min(conf(b)) == level);
            let share = table.records().iter().filter(|r| conf(r) == level).count() as f64 / total;
            ConfidenceStratum {
                level,
                n_pairs: n,
                result: if n >= 3 { pair_correlation(&xs, &ys, n) } else { None },
                review_share: share,
            }
        })
        .collect())
}

/// Correlation between a review's score and its reported confidence.
pub fn confidence_score_correlation(table: &ReviewTable) -> Result<CorrelationResult, AnalysisError> {
    if !table.has_confidence() {
        return Err(AnalysisError::MissingConfidence);
    }
    let (s, c): (Vec<f64>, Vec<f64>) = table
        .records()
        .iter()
        .filter_map(|r| r.confidence.map(|c| (r.score, c)))
        .unzip();
    stats::correlate(&s, &c).ok_or(AnalysisError::Undefined("constant scores or confidences"))
}

/// Authorship quality and leave-one-out reviewing MSD of one dual-role user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualRole {
    pub user: UserId,
    pub mean_own_cas: f64,
    pub msd_from_cas: f64,
}

/// Users who have at least one reviewed paper and at least one usable review.
pub fn dual_role_users(table: &ReviewTable, authorship: &Authorship, cfg: &QualityConfig) -> Vec<DualRole> {
    authorship
        .keys()
        .filter_map(|&u| {
            let a = quality::author_quality(table, authorship, u).ok()?;
            let q = quality::reviewer_msd_from_cas(table, u, None, cfg).ok()?;
            Some(DualRole {
                user: u,
                mean_own_cas: a.mean_own_cas,
                msd_from_cas: q.msd_from_cas,
            })
        })
        .collect()
}

/// Correlation between how well a user's papers scored and how far their
/// reviews sit from the community average.
pub fn author_vs_reviewer_quality(
    table: &ReviewTable,
    authorship: &Authorship,
    cfg: &QualityConfig,
) -> Result<CorrelationResult, AnalysisError> {
    let users = dual_role_users(table, authorship, cfg);
    if users.len() < 3 {
        return Err(AnalysisError::InsufficientDualRole(users.len()));
    }
    let a: Vec<f64> = users.iter().map(|u| u.mean_own_cas).collect();
    let m: Vec<f64> = users.iter().map(|u| u.msd_from_cas).collect();
    stats::correlate(&a, &m).ok_or(AnalysisError::Undefined("constant author or reviewer quality"))
}

/// Bottom decile, middle fifth and top decile of author scores.
pub const PRESET_GROUPS: [(f64, f64); 3] = [(0.0, 0.1), (0.4, 0.6), (0.9, 1.0)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub lo: f64,
    pub hi: f64,
    pub n_users: usize,
    pub mean_msd: f64,
    pub sd_msd: f64,
    pub n_pairs: usize,
    /// Correlation over pairs where both reviewers are in the group.
    pub pair_correlation: Option<CorrelationResult>,
}

impl GroupStats {
    pub fn label(&self) -> String {
        format!("{:.0}-{:.0}", self.lo * 100.0, self.hi * 100.0)
    }
}

/// Reviewing statistics for users grouped by the percentile of their
/// authorship quality. Percentiles run from 0 (lowest) to 1 (highest) using
/// tie-averaged ranks; bounds are inclusive.
pub fn percentile_group_stats(
    table: &ReviewTable,
    authorship: &Authorship,
    bounds: &[(f64, f64)],
    cfg: &QualityConfig,
) -> Result<Vec<GroupStats>, AnalysisError> {
    for &(lo, hi) in bounds {
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(AnalysisError::InvalidGroup(lo, hi));
        }
    }
    let users = dual_role_users(table, authorship, cfg);
    if users.len() < 3 {
        return Err(AnalysisError::InsufficientDualRole(users.len()));
    }
    let own: Vec<f64> = users.iter().map(|u| u.mean_own_cas).collect();
    let ranks = stats::average_ranks(&own);
    let denom = (users.len() - 1) as f64;
    let pct: BTreeMap<UserId, f64> = users
        .iter()
        .zip(&ranks)
        .map(|(u, r)| (u.user, (r - 1.0) / denom))
        .collect();
    Ok(bounds
        .iter()
        .map(|&(lo, hi)| {
            let inside = |u: &UserId| pct.get(u).is_some_and(|&p| p >= lo && p <= hi);
            let msds: Vec<f64> = users.iter().filter(|u| inside(&u.user)).map(|u| u.msd_from_cas).collect();
            let (xs, ys, n) = symmetric_pairs(table, |a, b| inside(&a.reviewer) && inside(&b.reviewer));
            GroupStats {
                lo,
                hi,
                n_users: msds.len(),
                mean_msd: if msds.is_empty() { f64::NAN } else { stats::mean(&msds) },
                sd_msd: stats::sample_sd(&msds),
                n_pairs: n,
                pair_correlation: if n >= 3 { pair_correlation(&xs, &ys, n) } else { None },
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Concentration {
    pub gini: f64,
    /// Largest single-paper share of all reviews.
    pub max_share: f64,
    /// `(reviews per paper, number of papers)` in ascending order.
    pub histogram: Vec<(usize, usize)>,
}

pub fn coverage_concentration(counts: &[usize]) -> Result<Concentration, AnalysisError> {
    if counts.is_empty() {
        return Err(AnalysisError::EmptyCounts);
    }
    let values: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let total: usize = counts.iter().sum();
    let max = counts.iter().copied().max().unwrap_or(0);
    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    for &c in counts {
        *hist.entry(c).or_default() += 1;
    }
    Ok(Concentration {
        gini: stats::gini(&values),
        max_share: if total > 0 { max as f64 / total as f64 } else { 0.0 },
        histogram: hist.into_iter().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::PaperId;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn rec(r: u32, p: u32, s: f64) -> ReviewRecord {
        ReviewRecord {
            reviewer: UserId(r),
            paper: PaperId(p),
            score: s,
            confidence: None,
        }
    }

    fn with_conf(r: u32, p: u32, s: f64, c: f64) -> ReviewRecord {
        ReviewRecord {
            confidence: Some(c),
            ..rec(r, p, s)
        }
    }

    #[test]
    fn perfect_agreement() {
        let mut recs = Vec::new();
        for p in 0..10u32 {
            for r in 0..3u32 {
                recs.push(rec(r, p, p as f64 / 10.0));
            }
        }
        let c = pairwise_reviewer_correlation(&ReviewTable::new(recs).unwrap()).unwrap();
        assert_relative_eq!(c.r, 1.0, epsilon = 1e-12);
        assert_eq!(c.n, 30);
    }

    #[test]
    fn independent_scores() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let recs: Vec<_> = (0..2000u32)
            .flat_map(|p| (0..2u32).map(move |r| (r, p)))
            .map(|(r, p)| rec(r, p, rng.random()))
            .collect();
        let c = pairwise_reviewer_correlation(&ReviewTable::new(recs).unwrap()).unwrap();
        assert!(c.r.abs() < 3.0 / (c.n as f64).sqrt(), "{c:?}");
    }

    #[test]
    fn no_pairs_is_an_error() {
        let t = ReviewTable::new(vec![rec(0, 0, 0.3), rec(1, 1, 0.4)]).unwrap();
        assert_eq!(pairwise_reviewer_correlation(&t), Err(AnalysisError::NoMultiReviewPapers));
    }

    #[test]
    fn rank_example() {
        let t = ReviewTable::new(vec![rec(0, 0, 0.2), rec(0, 1, 0.9), rec(0, 2, 0.5)]).unwrap();
        let n = normalize_scores(&t, Normalization::Rank);
        let got: Vec<f64> = n.table.records().iter().map(|r| r.score).collect();
        assert_relative_eq!(got[0], 1.0 / 3.0);
        assert_relative_eq!(got[1], 1.0);
        assert_relative_eq!(got[2], 2.0 / 3.0);
    }

    #[test]
    fn normalisation_flags() {
        let t = ReviewTable::new(vec![rec(0, 0, 0.2), rec(1, 0, 0.5), rec(1, 1, 0.5)]).unwrap();
        let z = normalize_scores(&t, Normalization::ZScore);
        assert_eq!(z.flags[&UserId(0)], NormalizationFlag::Passthrough);
        assert_eq!(z.flags[&UserId(1)], NormalizationFlag::ZeroSpread);
        assert_eq!(z.table.records()[0].score, 0.2);
        assert_eq!(z.table.records()[1].score, 0.0);
        assert_eq!("rank".parse::<Normalization>().unwrap(), Normalization::Rank);
        assert!("bogus".parse::<Normalization>().is_err());
    }

    #[test]
    fn confidence_strata() {
        let mut recs = Vec::new();
        for p in 0..6u32 {
            for r in 0..3u32 {
                recs.push(with_conf(r, p, (p * 3 + r) as f64 / 20.0, 3.0));
            }
        }
        let t = ReviewTable::new(recs).unwrap();
        let strata = confidence_stratified_correlation(&t).unwrap();
        assert_eq!(strata.len(), 1);
        assert_eq!(strata[0].result, Some(pairwise_reviewer_correlation(&t).unwrap()));
        assert_eq!(strata[0].review_share, 1.0);

        let plain = ReviewTable::new(vec![rec(0, 0, 0.1)]).unwrap();
        assert_eq!(confidence_stratified_correlation(&plain), Err(AnalysisError::MissingConfidence));
    }

    #[test]
    fn confidence_inverse_of_score() {
        let recs: Vec<_> = (0..10u32)
            .map(|i| with_conf(i, 0, i as f64 / 10.0, 1.0 - i as f64 / 10.0))
            .collect();
        let c = confidence_score_correlation(&ReviewTable::new(recs).unwrap()).unwrap();
        assert_relative_eq!(c.r, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn single_dual_role_user_errors() {
        let t = ReviewTable::new(vec![rec(0, 0, 0.3), rec(1, 0, 0.5), rec(0, 1, 0.2), rec(1, 1, 0.4)]).unwrap();
        let mut auth = Authorship::new();
        auth.entry(UserId(0)).or_default().insert(PaperId(1));
        assert_eq!(
            author_vs_reviewer_quality(&t, &auth, &QualityConfig::default()),
            Err(AnalysisError::InsufficientDualRole(1))
        );
    }

    #[test]
    fn concentration_examples() {
        assert_eq!(coverage_concentration(&[4, 4, 4]).unwrap().gini, 0.0);
        let c = coverage_concentration(&[0, 0, 0, 10]).unwrap();
        assert_relative_eq!(c.gini, 0.75);
        assert_eq!(c.max_share, 1.0);
        assert_eq!(c.histogram, vec![(0, 3), (10, 1)]);
        assert!(coverage_concentration(&[]).is_err());
    }

    fn random_table() -> impl Strategy<Value = ReviewTable> {
        proptest::collection::vec((0u32..6, 0u32..5, 0.0f64..1.0), 1..40).prop_map(|v| {
            let mut seen = std::collections::HashSet::new();
            let recs: Vec<_> = v
                .into_iter()
                .filter(|(r, p, _)| seen.insert((*r, *p)))
                .map(|(r, p, s)| rec(r, p, s))
                .collect();
            ReviewTable::new(recs).unwrap()
        })
    }

    proptest! {
        #[test]
        fn normalisations_keep_keys_and_bounds(t in random_table()) {
            for m in Normalization::ALL {
                let n = normalize_scores(&t, m);
                prop_assert_eq!(n.table.len(), t.len());
                for (a, b) in n.table.records().iter().zip(t.records()) {
                    prop_assert_eq!((a.reviewer, a.paper), (b.reviewer, b.paper));
                }
                if matches!(m, Normalization::Rank | Normalization::DistributionInversion) {
                    for u in t.reviewers().filter(|u| t.reviewer_records(*u).len() >= 2) {
                        for &i in t.reviewer_records(u) {
                            let v = n.table.record(i as usize).score;
                            prop_assert!(v > 0.0 && v <= 1.0);
                        }
                    }
                }
                if m == Normalization::MeanRemoval {
                    for u in t.reviewers() {
                        let v: Vec<f64> = t.reviewer_records(u).iter().map(|&i| n.table.record(i as usize).score).collect();
                        prop_assert!(stats::mean(&v).abs() < 1e-14);
                    }
                }
            }
        }

        #[test]
        fn pairwise_r_ignores_record_order(t in random_table(), seed in any::<u64>()) {
            let mut recs = t.records().to_vec();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            rand::seq::SliceRandom::shuffle(recs.as_mut_slice(), &mut rng);
            let shuffled = ReviewTable::new(recs).unwrap();
            match (pairwise_reviewer_correlation(&t), pairwise_reviewer_correlation(&shuffled)) {
                (Ok(a), Ok(b)) => {
                    prop_assert!((a.r - b.r).abs() < 1e-9);
                    prop_assert_eq!(a.n, b.n);
                }
                (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
            }
        }
    }
}
