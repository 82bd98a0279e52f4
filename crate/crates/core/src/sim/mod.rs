//! Multi-year open review platform.
//!
//! Each simulated year runs, in order: onboarding of new users (who bring
//! their initial papers), churn of pre-existing users, new papers, review
//! allocation and generation, rating of existing reviews, scoring with every
//! method, and evaluation against the hidden qualities. Content written by
//! users who later leave stays on the platform.

mod allocation;
mod config;
mod report;
mod scoring;

pub use allocation::{reward_signal, selection_probabilities, selection_weight, Allocator};
pub use config::{AllocationPolicy, SimConfig};
pub use report::{
    evaluate, BinSummary, EstimatorMetrics, QualitySplit, SimReport, YearReport, QUALITY_HIST_BINS,
};
pub use scoring::{binned_pipeline, score_platform, BinnedOutcome, Estimates, Method, Scorer};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::genmodel::{self, Agent, GenError, PaperTruth, World};
use crate::quality;
use crate::rng::{self, Purpose, SimRng};
use crate::table::{PaperId, RatingRecord, RatingScale, RatingTable, ReviewRecord, ReviewTable, UserId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("unknown scoring method {0:?} (expected one of simple_mean, bayes_binned, bayes_direct_sd, oracle, oracle_ungated, threshold_top_pct)")]
    UnknownMethod(String),
    #[error("rating {0} outside [0, 1]")]
    RatingOutOfRange(f64),
    #[error(transparent)]
    Gen(#[from] GenError),
}

/// 1 when `value >= threshold`, else 0.
pub fn binarize_rating(value: f64, threshold: f64) -> Result<f64, SimError> {
    if !(0.0..=1.0).contains(&value) {
        return Err(SimError::RatingOutOfRange(value));
    }
    Ok(if value >= threshold { 1.0 } else { 0.0 })
}

/// Join order for a warm start: the `n` honest agents with the highest
/// quality first (ties by id), then everyone else in their original order.
/// Bots rank below every honest agent.
pub fn warm_start_selection(pool: &[Agent], n: usize) -> Vec<UserId> {
    let mut ranked: Vec<&Agent> = pool.iter().collect();
    ranked.sort_by(|a, b| {
        a.is_bot
            .cmp(&b.is_bot)
            .then(b.quality.total_cmp(&a.quality))
            .then(a.id.cmp(&b.id))
    });
    let head: Vec<UserId> = ranked.iter().take(n).map(|a| a.id).collect();
    let chosen: std::collections::HashSet<UserId> = head.iter().copied().collect();
    head.iter()
        .copied()
        .chain(pool.iter().map(|a| a.id).filter(|u| !chosen.contains(u)))
        .collect()
}

/// Order-independent fingerprint of an agent pool.
pub fn pool_hash(pool: &[Agent]) -> String {
    let mut keys: Vec<(bool, u64)> = pool.iter().map(|a| (a.is_bot, a.quality.to_bits())).collect();
    keys.sort_unstable();
    let mut h = Sha256::new();
    for (bot, q) in keys {
        h.update([u8::from(bot)]);
        h.update(q.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReviewEvent {
    pub reviewer: UserId,
    pub paper: PaperId,
    pub score: f64,
    pub year: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingEvent {
    pub rater: UserId,
    pub ratee: UserId,
    pub value: f64,
    pub year: u32,
}

/// Full outcome of one replicate: the report plus the world and event log.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRun {
    pub report: SimReport,
    pub world: World,
    pub join_order: Vec<UserId>,
    pub reviews: Vec<ReviewEvent>,
    pub ratings: Vec<RatingEvent>,
}

impl SimRun {
    pub fn review_table(&self) -> ReviewTable {
        review_table(&self.reviews)
    }

    pub fn rating_table(&self, binary: bool) -> RatingTable {
        rating_table(&self.ratings, binary)
    }
}

fn review_table(events: &[ReviewEvent]) -> ReviewTable {
    ReviewTable::new(
        events
            .iter()
            .map(|e| ReviewRecord {
                reviewer: e.reviewer,
                paper: e.paper,
                score: e.score,
                confidence: None,
            })
            .collect(),
    )
    .expect("allocator never repeats a (reviewer, paper) pair")
}

fn rating_table(events: &[RatingEvent], binary: bool) -> RatingTable {
    let scale = if binary {
        RatingScale::Binary
    } else {
        RatingScale::Continuous
    };
    RatingTable::new(
        events
            .iter()
            .map(|e| RatingRecord {
                rater: e.rater,
                ratee: e.ratee,
                value: e.value,
            })
            .collect(),
        scale,
    )
    .expect("ratings are generated in range and never self-directed")
}

const RATING_TRIES: usize = 64;

/// Runs replicate `replicate` of the platform. Deterministic in
/// `(config, replicate)`.
pub fn run_simulation(config: &SimConfig, replicate: u64) -> Result<SimRun, SimError> {
    config.validate()?;
    let seed = config.world.seed;
    let wcfg = config.world;
    let mut world_rng = rng::stream(seed, Purpose::World, replicate);
    let mut paper_rng = rng::stream(seed, Purpose::Papers, replicate);
    let mut rng = rng::stream(seed, Purpose::Dynamics, replicate);
    // Ratings get their own stream so conditions differing only in rating
    // volume or scale see identical reviews.
    let mut rating_rng = rng::stream(seed, Purpose::Ratings, replicate);

    let pool = genmodel::sample_agents(&wcfg, config.pool_size(), &mut world_rng)?;
    let join_order: Vec<UserId> = if config.warm_start {
        warm_start_selection(&pool, config.initial_users)
    } else {
        pool.iter().map(|a| a.id).collect()
    };

    let mut papers: Vec<PaperTruth> = Vec::new();
    let mut alloc = Allocator::new(config.allocation, config.prior_variance, pool.len());
    let mut add_papers = |author: UserId, k: usize, papers: &mut Vec<PaperTruth>, alloc: &mut Allocator| {
        for _ in 0..k {
            let id = alloc.add_paper(author);
            papers.push(PaperTruth {
                id,
                quality: wcfg.paper_quality.sample(&mut paper_rng),
                author,
            });
        }
    };

    let mut live: Vec<UserId> = Vec::new();
    let mut next_join = 0usize;
    let mut hints: Vec<Option<f64>> = vec![None; pool.len()];
    let mut reviews: Vec<ReviewEvent> = Vec::new();
    let mut ratings: Vec<RatingEvent> = Vec::new();
    let mut years = Vec::with_capacity(config.years as usize);
    let mut warnings = Vec::new();
    let budget = config.review_budget();

    for year in 1..=config.years {
        // Onboarding.
        let pre_existing = live.clone();
        let n_join = if year == 1 {
            config.initial_users
        } else {
            config.joins_per_year
        };
        let joiners: Vec<UserId> = join_order[next_join..(next_join + n_join).min(join_order.len())].to_vec();
        next_join += joiners.len();
        for &u in &joiners {
            add_papers(u, config.initial_papers_per_user, &mut papers, &mut alloc);
            live.push(u);
        }

        // Churn among users present before this year's joins.
        if year > 1 && !pre_existing.is_empty() {
            let k = (config.churn_fraction * pre_existing.len() as f64).round() as usize;
            let mut leaving = pre_existing.clone();
            let (gone, _) = leaving.partial_shuffle(&mut rng, k);
            let gone: std::collections::HashSet<UserId> = gone.iter().copied().collect();
            live.retain(|u| !gone.contains(u));
        }

        // New content.
        for &u in &live.clone() {
            add_papers(u, config.papers_per_user_year, &mut papers, &mut alloc);
        }

        // Reviews, interleaved one per user per round.
        let mut order = live.clone();
        order.shuffle(&mut rng);
        let budgeted: usize = order.iter().map(|&u| budget.min(alloc.capacity(u))).sum();
        let mut written = 0;
        for _ in 0..budget {
            for &u in &order {
                let hint = hints[u.index()].unwrap_or(config.default_sigma_hint);
                let Some(p) = alloc.allocate(u, hint, &mut rng) else { continue };
                let g = genmodel::generate_review(&pool[u.index()], &papers[p.index()], &wcfg, year, &mut rng)?;
                alloc.record(u, p, hint);
                reviews.push(ReviewEvent {
                    reviewer: u,
                    paper: p,
                    score: g.value,
                    year,
                });
                written += 1;
            }
        }
        if written < order.len() * budget {
            warnings.push(format!(
                "year {year}: {} of {} reviews forfeited for lack of eligible papers",
                order.len() * budget - written,
                order.len() * budget
            ));
        }

        // Ratings of existing reviews by other users.
        for &u in &order {
            for _ in 0..config.ratings_per_user_year {
                let Some(target) = pick_review_to_rate(&reviews, u, &mut rating_rng) else { break };
                let ratee = reviews[target].reviewer;
                let g = genmodel::generate_rating(&pool[u.index()], &pool[ratee.index()], &wcfg, year, &mut rating_rng)?;
                let value = if config.binary_ratings {
                    binarize_rating(g.value, config.binary_threshold)?
                } else {
                    g.value
                };
                ratings.push(RatingEvent {
                    rater: u,
                    ratee,
                    value,
                    year,
                });
            }
        }

        // Scoring and evaluation.
        let review_tab = review_table(&reviews);
        let rating_tab = rating_table(&ratings, config.binary_ratings);
        let scorer = Scorer::new(&review_tab, &rating_tab, &pool, papers.len(), config);
        let truth: Vec<f64> = papers.iter().map(|p| p.quality).collect();
        let estimators = Method::ALL
            .iter()
            .map(|&m| evaluate(m, &scorer.score(m), &truth))
            .collect();
        let counts: Vec<f64> = alloc.counts().iter().map(|&c| c as f64).collect();
        let total: f64 = counts.iter().sum();
        let max = counts.iter().copied().fold(0.0, f64::max);

        let summary = quality::rating_based_quality(&rating_tab);
        let (mut bot_q, mut human_q) = (Vec::new(), Vec::new());
        for (u, s) in &summary {
            if pool[u.index()].is_bot {
                bot_q.push(s.mean);
            } else {
                human_q.push(s.mean);
            }
        }

        let (bins, n_ref) = match scorer.binned() {
            Some(b) => {
                for (u, q) in &b.sigmas.reviewers {
                    hints[u.index()] = Some(q.sigma_hat);
                }
                let bins = b
                    .sigmas
                    .bins
                    .iter()
                    .map(|bin| BinSummary::new(bin, config.quality.floor_sigma(bin.msd)))
                    .collect();
                (bins, b.n_reference_papers)
            }
            None => (Vec::new(), 0),
        };

        years.push(YearReport {
            year,
            live_users: live.len(),
            n_papers: papers.len(),
            reviews_budgeted: budgeted,
            reviews_written: written,
            reviews_total: reviews.len(),
            ratings_total: ratings.len(),
            gini: crate::stats::gini(&counts),
            max_share: if total > 0.0 { max / total } else { 0.0 },
            estimators,
            quality: QualitySplit::new(&bot_q, &human_q),
            bins,
            n_reference_papers: n_ref,
        });
    }

    Ok(SimRun {
        report: SimReport {
            years,
            pool_hash: pool_hash(&pool),
            warnings,
        },
        world: World { agents: pool, papers },
        join_order,
        reviews,
        ratings,
    })
}

/// A uniformly chosen review not written by `rater`.
fn pick_review_to_rate(reviews: &[ReviewEvent], rater: UserId, rng: &mut SimRng) -> Option<usize> {
    if reviews.is_empty() {
        return None;
    }
    for _ in 0..RATING_TRIES {
        let i = rng.random_range(0..reviews.len());
        if reviews[i].reviewer != rater {
            return Some(i);
        }
    }
    let others: Vec<usize> = (0..reviews.len()).filter(|&i| reviews[i].reviewer != rater).collect();
    (!others.is_empty()).then(|| others[rng.random_range(0..others.len())])
}
