//! Reviewer quality estimation.
//!
//! Three routes produce a per-reviewer spread `sigma_hat`:
//!
//! 1. history: mean squared deviation of the reviewer's scores from the
//!    leave-one-out community average score (CAS) of each reviewed paper;
//! 2. ratings: the mean rating a reviewer's reviews received, used to sort
//!    reviewers into equal-count bins whose pooled MSD on high-certainty
//!    papers becomes every member's spread;
//! 3. authorship: the mean CAS of a user's own papers, used directly as a
//!    weight.
//!
//! Every sigma produced here is floored at [`QualityConfig::sigma_floor`].

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::table::{Authorship, PaperId, RatingTable, ReviewTable, UserId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QualityError {
    #[error("empty review table")]
    EmptyTable,
    #[error("paper {0} has no reviews")]
    UnknownPaper(PaperId),
    #[error("CAS undefined after removal: reviewer {reviewer} is the only reviewer of paper {paper}")]
    CasUndefined { reviewer: UserId, paper: PaperId },
    #[error("insufficient history for reviewer {reviewer}: {available} usable review(s), {required} required")]
    InsufficientHistory {
        reviewer: UserId,
        available: usize,
        required: usize,
    },
    #[error("author {0} has no reviewed papers")]
    NoAuthoredPapers(UserId),
    #[error("no high-certainty papers")]
    NoHighCertaintyPapers,
    #[error("reviewer {0} has no rating")]
    MissingRating(UserId),
    #[error("no reviewer has deviations on the reference papers")]
    NoDeviations,
    #[error("invalid fraction {0}")]
    InvalidFraction(f64),
}

/// Tunables shared by every estimation route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QualityConfig {
    /// Lower bound on every estimated sigma (score units).
    pub sigma_floor: f64,
    pub n_bins: usize,
    /// Number of most recent reviews used by the history estimate.
    pub history_k: usize,
    /// Error instead of falling back when history is shorter than `history_k`.
    pub strict_history: bool,
    pub top_reviewer_pct: f64,
    pub top_paper_pct: f64,
    pub cutoff_pct: f64,
    /// A reference paper's CAS must pool at least this many reviews before
    /// deviations from it are counted.
    pub min_reference_reviews: usize,
    /// Weight given to the lowest-scoring author in the authorship weighting.
    pub author_weight_floor: f64,
    /// Direct-SD sigmas skip the paper being scored.
    pub direct_sd_leave_paper_out: bool,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            sigma_floor: 0.01,
            n_bins: 10,
            history_k: 5,
            strict_history: false,
            top_reviewer_pct: 0.20,
            top_paper_pct: 0.20,
            cutoff_pct: 0.80,
            min_reference_reviews: 2,
            author_weight_floor: 0.05,
            direct_sd_leave_paper_out: true,
        }
    }
}

impl QualityConfig {
    pub fn floor_sigma(&self, msd: f64) -> f64 {
        msd.max(0.0).sqrt().max(self.sigma_floor)
    }
}

/// Community average score of one paper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cas {
    pub mean: f64,
    pub n_reviews: usize,
    sum: f64,
}

impl Cas {
    /// Mean with one score removed; `None` when nothing would remain.
    pub fn without(&self, score: f64) -> Option<f64> {
        (self.n_reviews > 1).then(|| (self.sum - score) / (self.n_reviews - 1) as f64)
    }
}

/// Paper → CAS over every review in the table it was built from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CasMap {
    entries: Vec<Option<Cas>>,
}

impl CasMap {
    pub fn get(&self, paper: PaperId) -> Option<&Cas> {
        self.entries.get(paper.index()).and_then(Option::as_ref)
    }

    pub fn iter(&self) -> impl Iterator<Item = (PaperId, &Cas)> {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.as_ref().map(|c| (PaperId(i as u32), c)))
    }

    pub fn len(&self) -> usize {
        self.entries.iter().filter(|c| c.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn paper_cas(table: &ReviewTable, paper: PaperId) -> Option<Cas> {
    let idx = table.paper_records(paper);
    if idx.is_empty() {
        return None;
    }
    let sum: f64 = idx.iter().map(|&i| table.record(i as usize).score).sum();
    Some(Cas {
        mean: sum / idx.len() as f64,
        n_reviews: idx.len(),
        sum,
    })
}

pub fn community_average_scores(table: &ReviewTable) -> Result<CasMap, QualityError> {
    if table.is_empty() {
        return Err(QualityError::EmptyTable);
    }
    let entries = (0..table.paper_capacity())
        .map(|p| paper_cas(table, PaperId(p as u32)))
        .collect();
    Ok(CasMap { entries })
}

/// CAS of `paper` with `reviewer`'s review removed. A reviewer who did not
/// review the paper leaves the full CAS.
pub fn leave_one_out_cas(
    table: &ReviewTable,
    reviewer: UserId,
    paper: PaperId,
) -> Result<f64, QualityError> {
    let cas = paper_cas(table, paper).ok_or(QualityError::UnknownPaper(paper))?;
    match table.score(reviewer, paper) {
        None => Ok(cas.mean),
        Some(score) => cas
            .without(score)
            .ok_or(QualityError::CasUndefined { reviewer, paper }),
    }
}

/// Reviewer quality estimate; which fields are meaningful depends on the route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReviewerQuality {
    pub reviewer: UserId,
    pub msd_from_cas: f64,
    pub sigma_hat: f64,
    /// Number of squared deviations behind `msd_from_cas`.
    pub n_deviations: usize,
    pub rating_mean: Option<f64>,
    pub bin_index: Option<usize>,
    /// Set when the estimate came from a fallback path (short history,
    /// inherited bin MSD).
    pub flagged: bool,
}

/// Squared deviations of `reviewer`'s scores from each paper's leave-one-out
/// CAS, in table order, skipping papers without other reviews.
fn loo_deviations<'a>(
    table: &'a ReviewTable,
    reviewer: UserId,
    exclude_paper: Option<PaperId>,
) -> impl Iterator<Item = f64> + 'a {
    table
        .reviewer_records(reviewer)
        .iter()
        .map(move |&i| table.record(i as usize))
        .filter(move |r| Some(r.paper) != exclude_paper)
        .filter_map(move |r| {
            let cas = paper_cas(table, r.paper)?;
            cas.without(r.score).map(|loo| (r.score - loo).powi(2))
        })
}

/// MSD of a reviewer's scores from the leave-one-out CAS over all reviewed
/// papers except `exclude_paper`. Reviews of the excluded paper are never read.
pub fn reviewer_msd_from_cas(
    table: &ReviewTable,
    reviewer: UserId,
    exclude_paper: Option<PaperId>,
    cfg: &QualityConfig,
) -> Result<ReviewerQuality, QualityError> {
    let devs: Vec<f64> = loo_deviations(table, reviewer, exclude_paper).collect();
    if devs.is_empty() {
        return Err(QualityError::InsufficientHistory {
            reviewer,
            available: 0,
            required: 1,
        });
    }
    let msd = devs.iter().sum::<f64>() / devs.len() as f64;
    Ok(ReviewerQuality {
        reviewer,
        msd_from_cas: msd,
        sigma_hat: cfg.floor_sigma(msd),
        n_deviations: devs.len(),
        rating_mean: None,
        bin_index: None,
        flagged: false,
    })
}

/// Sigma from the `k` most recent usable reviews (table order is chronology).
/// With fewer than `k` available, uses all of them and flags the result, or
/// errors when `cfg.strict_history` is set.
pub fn empirical_sigma_from_history(
    table: &ReviewTable,
    reviewer: UserId,
    k: usize,
    cfg: &QualityConfig,
) -> Result<ReviewerQuality, QualityError> {
    let devs: Vec<f64> = loo_deviations(table, reviewer, None).collect();
    let short = devs.len() < k;
    if devs.is_empty() || (short && cfg.strict_history) {
        return Err(QualityError::InsufficientHistory {
            reviewer,
            available: devs.len(),
            required: k,
        });
    }
    let recent = &devs[devs.len().saturating_sub(k)..];
    let msd = recent.iter().sum::<f64>() / recent.len() as f64;
    Ok(ReviewerQuality {
        reviewer,
        msd_from_cas: msd,
        sigma_hat: cfg.floor_sigma(msd),
        n_deviations: recent.len(),
        rating_mean: None,
        bin_index: None,
        flagged: short,
    })
}

/// Per-record sigma of the record's reviewer, estimated with the record's
/// paper left out. `None` where the reviewer has no other usable review.
///
/// Equivalent to calling [`reviewer_msd_from_cas`] with
/// `exclude_paper = record.paper` for every record, in linear time.
pub fn direct_sigmas_excluding_paper(table: &ReviewTable, cfg: &QualityConfig) -> Vec<Option<f64>> {
    direct_sigmas(table, cfg, true)
}

/// Per-record sigma of the record's reviewer from their whole review history
/// (`leave_paper_out = false`) or with the record's own paper left out.
pub fn direct_sigmas(table: &ReviewTable, cfg: &QualityConfig, leave_paper_out: bool) -> Vec<Option<f64>> {
    let cas: Vec<Option<Cas>> = (0..table.paper_capacity())
        .map(|p| paper_cas(table, PaperId(p as u32)))
        .collect();
    let dev: Vec<Option<f64>> = table
        .records()
        .iter()
        .map(|r| {
            cas[r.paper.index()]
                .and_then(|c| c.without(r.score))
                .map(|loo| (r.score - loo).powi(2))
        })
        .collect();
    table
        .records()
        .iter()
        .map(|r| {
            let (sum, n) = table
                .reviewer_records(r.reviewer)
                .iter()
                .filter(|&&j| !leave_paper_out || table.record(j as usize).paper != r.paper)
                .filter_map(|&j| dev[j as usize])
                .fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
            (n > 0).then(|| cfg.floor_sigma(sum / n as f64))
        })
        .collect()
}

/// Pooled MSD of every record from its paper's leave-one-out CAS.
pub fn pooled_msd(table: &ReviewTable) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for p in table.papers() {
        let Some(cas) = paper_cas(table, p) else { continue };
        for &i in table.paper_records(p) {
            let r = table.record(i as usize);
            if let Some(loo) = cas.without(r.score) {
                sum += (r.score - loo).powi(2);
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuthorQuality {
    pub author: UserId,
    pub mean_own_cas: f64,
    pub n_papers: usize,
}

/// Mean CAS over the author's reviewed papers.
pub fn author_quality(
    table: &ReviewTable,
    authorship: &Authorship,
    author: UserId,
) -> Result<AuthorQuality, QualityError> {
    let cas: Vec<f64> = authorship
        .get(&author)
        .into_iter()
        .flatten()
        .filter_map(|&p| paper_cas(table, p).map(|c| c.mean))
        .collect();
    if cas.is_empty() {
        return Err(QualityError::NoAuthoredPapers(author));
    }
    Ok(AuthorQuality {
        author,
        mean_own_cas: cas.iter().sum::<f64>() / cas.len() as f64,
        n_papers: cas.len(),
    })
}

/// Mean rating received by a reviewer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingSummary {
    pub mean: f64,
    pub count: usize,
}

/// Averages every rating each reviewer received. Reviewers never rated are absent.
pub fn rating_based_quality(ratings: &RatingTable) -> BTreeMap<UserId, RatingSummary> {
    let mut per: BTreeMap<UserId, Vec<f64>> = BTreeMap::new();
    for r in ratings.records() {
        per.entry(r.ratee).or_default().push(r.value);
    }
    per.into_iter()
        .map(|(id, mut v)| {
            // Order-independent sum.
            v.sort_by(f64::total_cmp);
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            (id, RatingSummary { mean, count: v.len() })
        })
        .collect()
}

/// Rating means for every reviewer in `table`; unrated reviewers receive the
/// median of the rated ones (0.5 when nobody was rated).
pub fn rating_means_with_imputation(
    table: &ReviewTable,
    ratings: &BTreeMap<UserId, RatingSummary>,
) -> BTreeMap<UserId, f64> {
    let rated: Vec<f64> = table
        .reviewers()
        .filter_map(|u| ratings.get(&u).map(|s| s.mean))
        .collect();
    let fill = if rated.is_empty() {
        0.5
    } else {
        crate::stats::median(&rated)
    };
    table
        .reviewers()
        .map(|u| (u, ratings.get(&u).map_or(fill, |s| s.mean)))
        .collect()
}

fn check_fraction(x: f64) -> Result<(), QualityError> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(QualityError::InvalidFraction(x))
    }
}

/// Rating value at which the top `top_fraction` of reviewers begins.
fn top_threshold(means: &BTreeMap<UserId, f64>, top_fraction: f64) -> Option<f64> {
    if means.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = means.values().copied().collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let keep = ((top_fraction * n as f64) - 1e-9).ceil().max(1.0) as usize;
    Some(v[n - keep.min(n)])
}

/// Reviewers whose rating mean is at or above the `cutoff_pct` quantile.
/// Ties at the threshold are kept.
pub fn percentile_threshold_filter(
    means: &BTreeMap<UserId, f64>,
    cutoff_pct: f64,
) -> Result<BTreeSet<UserId>, QualityError> {
    check_fraction(cutoff_pct)?;
    let Some(threshold) = top_threshold(means, 1.0 - cutoff_pct) else {
        return Ok(BTreeSet::new());
    };
    Ok(means
        .iter()
        .filter(|(_, &m)| m >= threshold)
        .map(|(&u, _)| u)
        .collect())
}

/// Papers whose CAS is best determined: restrict to reviews by the top-rated
/// reviewers, then take the papers with the most remaining reviews (ties by
/// paper id). Papers with no remaining review never qualify.
pub fn high_certainty_paper_subset(
    table: &ReviewTable,
    means: &BTreeMap<UserId, f64>,
    top_reviewer_pct: f64,
    top_paper_pct: f64,
) -> Result<BTreeSet<PaperId>, QualityError> {
    check_fraction(top_reviewer_pct)?;
    check_fraction(top_paper_pct)?;
    let top = percentile_threshold_filter(means, 1.0 - top_reviewer_pct)?;
    let mut counts: Vec<(PaperId, usize)> = table
        .papers()
        .map(|p| {
            let c = table
                .paper_records(p)
                .iter()
                .filter(|&&i| top.contains(&table.record(i as usize).reviewer))
                .count();
            (p, c)
        })
        .collect();
    let n_papers = counts.len();
    let take = ((top_paper_pct * n_papers as f64) - 1e-9).ceil().max(0.0) as usize;
    counts.retain(|&(_, c)| c > 0);
    counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let out: BTreeSet<PaperId> = counts.into_iter().take(take).map(|(p, _)| p).collect();
    if out.is_empty() {
        return Err(QualityError::NoHighCertaintyPapers);
    }
    Ok(out)
}

/// One equal-count bin of reviewers sorted by rating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingBin {
    pub members: Vec<UserId>,
    pub rating_lo: f64,
    pub rating_hi: f64,
    pub msd: f64,
    pub n_deviations: usize,
    /// MSD copied from the nearest populated bin.
    pub inherited: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinnedSigmas {
    pub bins: Vec<RatingBin>,
    pub reviewers: BTreeMap<UserId, ReviewerQuality>,
}

impl BinnedSigmas {
    pub fn sigma(&self, reviewer: UserId) -> Option<f64> {
        self.reviewers.get(&reviewer).map(|q| q.sigma_hat)
    }
}

/// Splits `n` items into `k` contiguous chunks whose sizes differ by at most one
/// (larger chunks first).
fn chunk_sizes(n: usize, k: usize) -> Vec<usize> {
    let k = k.min(n).max(1);
    (0..k).map(|i| n / k + usize::from(i < n % k)).collect()
}

/// Bins reviewers by rating and gives each member the pooled MSD of its bin,
/// measured against the CAS of `reference_papers`.
///
/// Every table reviewer must appear in `means`. A bin with no deviation on
/// the reference papers inherits the MSD of the nearest populated bin (lower
/// bin on ties) and is flagged.
pub fn binned_sigma(
    table: &ReviewTable,
    means: &BTreeMap<UserId, f64>,
    reference_papers: &BTreeSet<PaperId>,
    cfg: &QualityConfig,
) -> Result<BinnedSigmas, QualityError> {
    if let Some(u) = table.reviewers().find(|u| !means.contains_key(u)) {
        return Err(QualityError::MissingRating(u));
    }
    let mut order: Vec<(UserId, f64)> = means.iter().map(|(&u, &m)| (u, m)).collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

    let mut bins = Vec::new();
    let mut start = 0;
    for size in chunk_sizes(order.len(), cfg.n_bins) {
        let chunk = &order[start..start + size];
        start += size;
        let mut sum = 0.0;
        let mut n = 0usize;
        for &(u, _) in chunk {
            for &i in table.reviewer_records(u) {
                let r = table.record(i as usize);
                if !reference_papers.contains(&r.paper) {
                    continue;
                }
                let Some(cas) = paper_cas(table, r.paper) else { continue };
                if cas.n_reviews < cfg.min_reference_reviews {
                    continue;
                }
                sum += (r.score - cas.mean).powi(2);
                n += 1;
            }
        }
        bins.push(RatingBin {
            members: chunk.iter().map(|&(u, _)| u).collect(),
            rating_lo: chunk.first().map_or(f64::NAN, |c| c.1),
            rating_hi: chunk.last().map_or(f64::NAN, |c| c.1),
            msd: if n > 0 { sum / n as f64 } else { f64::NAN },
            n_deviations: n,
            inherited: false,
        });
    }

    let populated: Vec<usize> = (0..bins.len()).filter(|&i| bins[i].n_deviations > 0).collect();
    if populated.is_empty() {
        return Err(QualityError::NoDeviations);
    }
    for i in 0..bins.len() {
        if bins[i].n_deviations == 0 {
            let src = *populated
                .iter()
                .min_by_key(|&&j| (j.abs_diff(i), j))
                .expect("nonempty");
            bins[i].msd = bins[src].msd;
            bins[i].inherited = true;
        }
    }

    let mut reviewers = BTreeMap::new();
    for (b, bin) in bins.iter().enumerate() {
        for &u in &bin.members {
            reviewers.insert(
                u,
                ReviewerQuality {
                    reviewer: u,
                    msd_from_cas: bin.msd,
                    sigma_hat: cfg.floor_sigma(bin.msd),
                    n_deviations: bin.n_deviations,
                    rating_mean: means.get(&u).copied(),
                    bin_index: Some(b),
                    flagged: bin.inherited,
                },
            );
        }
    }
    Ok(BinnedSigmas { bins, reviewers })
}

/// Authorship quality used as a Bayes weight: mean own CAS, min-max scaled to
/// `[author_weight_floor, 1]`. Reviewers without authored papers get the
/// median author weight.
pub fn author_quality_weights(
    table: &ReviewTable,
    authorship: &Authorship,
    cfg: &QualityConfig,
) -> BTreeMap<UserId, f64> {
    let own: BTreeMap<UserId, f64> = table
        .reviewers()
        .filter_map(|u| author_quality(table, authorship, u).ok().map(|a| (u, a.mean_own_cas)))
        .collect();
    let lo = own.values().copied().fold(f64::INFINITY, f64::min);
    let hi = own.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = cfg.author_weight_floor;
    let scale = |c: f64| {
        if hi > lo {
            floor + (1.0 - floor) * (c - lo) / (hi - lo)
        } else {
            1.0
        }
    };
    let weights: BTreeMap<UserId, f64> = own.iter().map(|(&u, &c)| (u, scale(c))).collect();
    let fill = if weights.is_empty() {
        1.0
    } else {
        crate::stats::median(&weights.values().copied().collect::<Vec<_>>())
    };
    table
        .reviewers()
        .map(|u| (u, weights.get(&u).copied().unwrap_or(fill)))
        .collect()
}

/// Sigma whose inverse-variance weight equals `weight`.
pub fn sigma_from_weight(weight: f64) -> f64 {
    1.0 / weight.sqrt()
}
