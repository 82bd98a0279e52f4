//! Generative world model.
//!
//! Papers carry a hidden quality `q ∈ (0, 1)`, users a hidden reviewer
//! quality `p ∈ (0, 1)`. An honest reviewer scores paper `j` with a draw from
//! `N(q_j, α / p_i)` (second argument is a standard deviation) and rates
//! another user's review with a draw from `N(p_j, α / p_i)`. Bots ignore
//! everything and draw uniformly from `[0, 1]`. Draws are restricted to
//! `[0, 1]` by clamping or by redrawing.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::analysis;
use crate::rng::{self, Purpose, SimRng};
use crate::table::{Authorship, PaperId, ReviewRecord, ReviewTable, UserId};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GenError {
    #[error("alpha must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("bot fraction {0} outside [0, 1]")]
    InvalidBotFraction(f64),
    #[error("invalid quality distribution: {0}")]
    InvalidDistribution(String),
    #[error("honest agent {agent} has non-positive quality {quality}")]
    NonPositiveQuality { agent: UserId, quality: f64 },
    #[error("user {0} cannot rate their own review")]
    SelfRating(UserId),
    #[error("target correlation {0} must lie in (0, 1)")]
    InvalidTarget(f64),
    #[error("target r = {target} unreachable: alpha in [{lo}, {hi}] gives r in [{r_hi}, {r_lo}]")]
    Unreachable {
        target: f64,
        lo: f64,
        hi: f64,
        r_lo: f64,
        r_hi: f64,
    },
    #[error("review table shape infeasible: {0}")]
    Shape(String),
    #[error(transparent)]
    Analysis(#[from] analysis::AnalysisError),
}

/// Distribution of hidden qualities over (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QualityDist {
    #[default]
    Uniform,
    Beta { a: f64, b: f64 },
}

impl QualityDist {
    fn validate(&self) -> Result<(), GenError> {
        match *self {
            QualityDist::Uniform => Ok(()),
            QualityDist::Beta { a, b } if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() => Ok(()),
            QualityDist::Beta { a, b } => Err(GenError::InvalidDistribution(format!("beta({a}, {b})"))),
        }
    }

    pub fn sample(&self, rng: &mut SimRng) -> f64 {
        let x = match *self {
            QualityDist::Uniform => rng.random::<f64>(),
            QualityDist::Beta { a, b } => Beta::new(a, b).expect("validated").sample(rng),
        };
        // Keep strictly inside (0, 1).
        x.clamp(f64::EPSILON, 1.0 - f64::EPSILON)
    }
}

/// How out-of-range draws are brought back into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClampMode {
    /// Truncate to the nearest bound.
    Clamp,
    /// Redraw until the value lands inside the interval.
    #[default]
    Resample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    /// Spread coefficient: honest s.d. is `alpha / p`.
    pub alpha: f64,
    pub bot_fraction: f64,
    pub paper_quality: QualityDist,
    pub reviewer_quality: QualityDist,
    pub clamp_mode: ClampMode,
    /// Lower bound on honest reviewer quality; caps s.d. at `alpha / min`.
    pub min_reviewer_quality: f64,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            alpha: 0.18,
            bot_fraction: 0.0,
            paper_quality: QualityDist::Uniform,
            reviewer_quality: QualityDist::Uniform,
            clamp_mode: ClampMode::Resample,
            min_reviewer_quality: 0.05,
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(GenError::InvalidAlpha(self.alpha));
        }
        if !(0.0..=1.0).contains(&self.bot_fraction) {
            return Err(GenError::InvalidBotFraction(self.bot_fraction));
        }
        self.paper_quality.validate()?;
        self.reviewer_quality.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: UserId,
    /// Hidden reviewer quality. Ignored for bots.
    pub quality: f64,
    pub is_bot: bool,
}

impl Agent {
    /// Quality as seen by honest raters: bots count as 0.
    pub fn effective_quality(&self) -> f64 {
        if self.is_bot {
            0.0
        } else {
            self.quality
        }
    }

    /// True review spread `alpha / p`; `None` for bots.
    pub fn true_sigma(&self, alpha: f64) -> Option<f64> {
        (!self.is_bot).then(|| alpha / self.quality)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PaperTruth {
    pub id: PaperId,
    pub quality: f64,
    pub author: UserId,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratedReview {
    pub reviewer: UserId,
    pub paper: PaperId,
    pub value: f64,
    pub year: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratedRating {
    pub rater: UserId,
    pub ratee: UserId,
    pub value: f64,
    pub year: u32,
}

/// Hidden ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub agents: Vec<Agent>,
    pub papers: Vec<PaperTruth>,
}

impl World {
    pub fn authorship(&self) -> Authorship {
        let mut out = Authorship::new();
        for p in &self.papers {
            out.entry(p.author).or_default().insert(p.id);
        }
        out
    }
}

/// `n` agents with exactly `round(bot_fraction * n)` bots at random positions.
pub fn sample_agents(config: &WorldConfig, n: usize, rng: &mut SimRng) -> Result<Vec<Agent>, GenError> {
    config.validate()?;
    let n_bots = (config.bot_fraction * n as f64).round() as usize;
    let mut flags: Vec<bool> = (0..n).map(|i| i < n_bots).collect();
    flags.shuffle(rng);
    Ok(flags
        .into_iter()
        .enumerate()
        .map(|(i, is_bot)| Agent {
            id: UserId(i as u32),
            quality: config
                .reviewer_quality
                .sample(rng)
                .max(config.min_reviewer_quality),
            is_bot,
        })
        .collect())
}

/// Samples `n_agents` users, each authoring `papers_per_agent` papers.
/// Deterministic in `config.seed`.
pub fn sample_world(config: &WorldConfig, n_agents: usize, papers_per_agent: usize) -> Result<World, GenError> {
    let mut rng = rng::stream(config.seed, Purpose::World, 0);
    let agents = sample_agents(config, n_agents, &mut rng)?;
    let mut papers = Vec::with_capacity(n_agents * papers_per_agent);
    for a in &agents {
        for _ in 0..papers_per_agent {
            papers.push(PaperTruth {
                id: PaperId(papers.len() as u32),
                quality: config.paper_quality.sample(&mut rng),
                author: a.id,
            });
        }
    }
    Ok(World { agents, papers })
}

const MAX_REDRAWS: usize = 100_000;

fn bounded_normal(mean: f64, sd: f64, mode: ClampMode, rng: &mut SimRng) -> f64 {
    let normal = Normal::new(mean, sd).expect("finite positive sd");
    match mode {
        ClampMode::Clamp => normal.sample(rng).clamp(0.0, 1.0),
        ClampMode::Resample => {
            for _ in 0..MAX_REDRAWS {
                let x = normal.sample(rng);
                if (0.0..=1.0).contains(&x) {
                    return x;
                }
            }
            normal.sample(rng).clamp(0.0, 1.0)
        }
    }
}

/// One noisy draw around `target` by `actor`.
pub fn noisy_draw(actor: &Agent, target: f64, config: &WorldConfig, rng: &mut SimRng) -> Result<f64, GenError> {
    if actor.is_bot {
        return Ok(rng.random::<f64>());
    }
    if !(actor.quality > 0.0) {
        return Err(GenError::NonPositiveQuality {
            agent: actor.id,
            quality: actor.quality,
        });
    }
    Ok(bounded_normal(target, config.alpha / actor.quality, config.clamp_mode, rng))
}

pub fn generate_review(
    agent: &Agent,
    paper: &PaperTruth,
    config: &WorldConfig,
    year: u32,
    rng: &mut SimRng,
) -> Result<GeneratedReview, GenError> {
    Ok(GeneratedReview {
        reviewer: agent.id,
        paper: paper.id,
        value: noisy_draw(agent, paper.quality, config, rng)?,
        year,
    })
}

pub fn generate_rating(
    rater: &Agent,
    ratee: &Agent,
    config: &WorldConfig,
    year: u32,
    rng: &mut SimRng,
) -> Result<GeneratedRating, GenError> {
    if rater.id == ratee.id {
        return Err(GenError::SelfRating(rater.id));
    }
    Ok(GeneratedRating {
        rater: rater.id,
        ratee: ratee.id,
        value: noisy_draw(rater, ratee.effective_quality(), config, rng)?,
        year,
    })
}

/// Shape of a conference-style review table: every reviewer is also an author.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConferenceShape {
    pub n_papers: usize,
    pub n_reviewers: usize,
    pub reviews_per_paper: usize,
}

impl ConferenceShape {
    /// 527 abstracts, 589 reviewers, about nine reviews per abstract.
    pub const CCN_LIKE: ConferenceShape = ConferenceShape {
        n_papers: 527,
        n_reviewers: 589,
        reviews_per_paper: 9,
    };
}

/// Samples a world of shape `shape` and a review table where each paper is
/// reviewed by `reviews_per_paper` distinct non-authors.
pub fn conference_table(
    config: &WorldConfig,
    shape: ConferenceShape,
    rng: &mut SimRng,
) -> Result<(World, ReviewTable), GenError> {
    if shape.reviews_per_paper + 1 > shape.n_reviewers {
        return Err(GenError::Shape(format!(
            "{} reviews per paper needs more than {} reviewers",
            shape.reviews_per_paper, shape.n_reviewers
        )));
    }
    let agents = sample_agents(config, shape.n_reviewers, rng)?;
    let papers: Vec<PaperTruth> = (0..shape.n_papers)
        .map(|j| PaperTruth {
            id: PaperId(j as u32),
            quality: config.paper_quality.sample(rng),
            author: UserId(rng.random_range(0..shape.n_reviewers) as u32),
        })
        .collect();
    let mut records = Vec::with_capacity(shape.n_papers * shape.reviews_per_paper);
    let mut pool: Vec<usize> = (0..shape.n_reviewers).collect();
    for paper in &papers {
        let (picked, _) = pool.partial_shuffle(rng, shape.reviews_per_paper + 1);
        let mut taken = 0;
        for &i in picked.iter() {
            if taken == shape.reviews_per_paper {
                break;
            }
            if agents[i].id == paper.author {
                continue;
            }
            let g = generate_review(&agents[i], paper, config, 0, rng)?;
            records.push(ReviewRecord {
                reviewer: g.reviewer,
                paper: g.paper,
                score: g.value,
                confidence: None,
            });
            taken += 1;
        }
    }
    let table = ReviewTable::new(records).expect("distinct reviewers per paper");
    Ok((World { agents, papers }, table))
}

/// Mean pairwise reviewer correlation over `replicates` conference tables
/// drawn at the given alpha. Uses the same random streams for every alpha.
pub fn pairwise_r_at(
    alpha: f64,
    config: &WorldConfig,
    shape: ConferenceShape,
    replicates: usize,
) -> Result<f64, GenError> {
    let cfg = WorldConfig { alpha, ..*config };
    let mut total = 0.0;
    for rep in 0..replicates {
        let mut rng = rng::stream(config.seed, Purpose::Calibration, rep as u64);
        let (_, table) = conference_table(&cfg, shape, &mut rng)?;
        total += analysis::pairwise_reviewer_correlation(&table)?.r;
    }
    Ok(total / replicates as f64)
}

/// Calibration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub shape: ConferenceShape,
    pub replicates: usize,
    /// Accept once `|r - target| <= tolerance`.
    pub tolerance: f64,
    pub alpha_lo: f64,
    pub alpha_hi: f64,
    pub max_iter: usize,
}

impl Default for Calibration {
    fn default() -> Self {
        Self {
            shape: ConferenceShape::CCN_LIKE,
            replicates: 4,
            tolerance: 0.002,
            alpha_lo: 0.01,
            alpha_hi: 2.0,
            max_iter: 40,
        }
    }
}

/// Bisection on alpha until the simulated pairwise reviewer correlation
/// matches `target_r`. Correlation decreases in alpha.
pub fn calibrate_alpha(target_r: f64, config: &WorldConfig, cal: &Calibration) -> Result<f64, GenError> {
    if !(target_r > 0.0 && target_r < 1.0) {
        return Err(GenError::InvalidTarget(target_r));
    }
    config.validate()?;
    let r_at = |a: f64| pairwise_r_at(a, config, cal.shape, cal.replicates);
    let (mut lo, mut hi) = (cal.alpha_lo, cal.alpha_hi);
    let r_lo = r_at(lo)?;
    let r_hi = r_at(hi)?;
    if !(r_hi <= target_r && target_r <= r_lo) {
        return Err(GenError::Unreachable {
            target: target_r,
            lo,
            hi,
            r_lo,
            r_hi,
        });
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..cal.max_iter {
        mid = 0.5 * (lo + hi);
        let r = r_at(mid)?;
        if (r - target_r).abs() <= cal.tolerance {
            break;
        }
        if r > target_r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn honest(p: f64) -> Agent {
        Agent {
            id: UserId(0),
            quality: p,
            is_bot: false,
        }
    }

    fn bot() -> Agent {
        Agent {
            id: UserId(1),
            quality: 0.7,
            is_bot: true,
        }
    }

    fn paper(q: f64) -> PaperTruth {
        PaperTruth {
            id: PaperId(0),
            quality: q,
            author: UserId(9),
        }
    }

    #[test]
    fn bot_counts() {
        let cfg = WorldConfig::default();
        let w = sample_world(&cfg, 100, 1).unwrap();
        assert!(w.agents.iter().all(|a| !a.is_bot));
        let cfg = WorldConfig {
            bot_fraction: 0.8,
            ..cfg
        };
        let w = sample_world(&cfg, 500, 2).unwrap();
        assert_eq!(w.agents.iter().filter(|a| a.is_bot).count(), 400);
        assert_eq!(w.papers.len(), 1000);
        assert!(w.papers.iter().all(|p| p.quality > 0.0 && p.quality < 1.0));
        assert!(w.agents.iter().all(|a| a.quality >= 0.05 && a.quality < 1.0));
        assert!(sample_world(&WorldConfig { bot_fraction: 1.5, ..cfg }, 10, 1).is_err());
    }

    #[test]
    fn same_seed_same_world() {
        let cfg = WorldConfig {
            seed: 42,
            bot_fraction: 0.3,
            ..WorldConfig::default()
        };
        assert_eq!(sample_world(&cfg, 50, 2).unwrap(), sample_world(&cfg, 50, 2).unwrap());
        let other = WorldConfig { seed: 43, ..cfg };
        assert_ne!(sample_world(&cfg, 50, 2).unwrap(), sample_world(&other, 50, 2).unwrap());
    }

    #[test]
    fn zero_noise_limit() {
        let cfg = WorldConfig {
            alpha: 1e-9,
            ..WorldConfig::default()
        };
        let mut rng = rng::stream(1, Purpose::Experiment, 0);
        let r = generate_review(&honest(0.5), &paper(0.37), &cfg, 0, &mut rng).unwrap();
        assert!((r.value - 0.37).abs() < 1e-6);
        let rater = Agent {
            quality: 0.999,
            ..honest(0.999)
        };
        let ratee = Agent {
            id: UserId(3),
            quality: 0.61,
            is_bot: false,
        };
        let g = generate_rating(&rater, &ratee, &cfg, 0, &mut rng).unwrap();
        assert!((g.value - 0.61).abs() < 1e-6);
    }

    #[test]
    fn errors() {
        let cfg = WorldConfig::default();
        let mut rng = rng::stream(1, Purpose::Experiment, 0);
        assert!(matches!(
            generate_review(&honest(0.0), &paper(0.5), &cfg, 0, &mut rng),
            Err(GenError::NonPositiveQuality { .. })
        ));
        let a = honest(0.5);
        assert_eq!(
            generate_rating(&a, &a, &cfg, 0, &mut rng),
            Err(GenError::SelfRating(UserId(0)))
        );
        assert!(calibrate_alpha(1.2, &cfg, &Calibration::default()).is_err());
    }

    #[test]
    fn bot_draws_are_uniform() {
        let cfg = WorldConfig::default();
        let mut rng = rng::stream(2, Purpose::Experiment, 0);
        let n = 100_000;
        let mut sum = 0.0;
        let mut qs = Vec::with_capacity(n);
        let mut vs = Vec::with_capacity(n);
        for i in 0..n {
            let q = (i as f64 + 0.5) / n as f64;
            let v = generate_review(&bot(), &paper(q), &cfg, 0, &mut rng).unwrap().value;
            assert!((0.0..=1.0).contains(&v));
            sum += v;
            qs.push(q);
            vs.push(v);
        }
        assert!((sum / n as f64 - 0.5).abs() < 0.005);
        assert!(crate::stats::pearson(&qs, &vs).unwrap().abs() < 0.01);

        let ratee = honest(0.9);
        let rater = Agent { id: UserId(5), ..bot() };
        let m: f64 = (0..n)
            .map(|_| generate_rating(&rater, &ratee, &cfg, 0, &mut rng).unwrap().value)
            .sum::<f64>()
            / n as f64;
        assert!((m - 0.5).abs() < 0.005);
    }

    #[test]
    fn honest_spread_matches_alpha_over_p() {
        let cfg = WorldConfig {
            clamp_mode: ClampMode::Clamp,
            ..WorldConfig::default()
        };
        let mut rng = rng::stream(3, Purpose::Experiment, 0);
        let n = 100_000;
        let v: Vec<f64> = (0..n)
            .map(|_| generate_review(&honest(1.0), &paper(0.5), &cfg, 0, &mut rng).unwrap().value)
            .collect();
        let sd = crate::stats::sample_sd(&v);
        assert!((sd / 0.18 - 1.0).abs() < 0.03, "sd {sd}");
    }

    #[test]
    fn rating_spread_grows_as_rater_quality_falls() {
        let cfg = WorldConfig::default();
        let mut rng = rng::stream(4, Purpose::Experiment, 0);
        let ratee = Agent {
            id: UserId(7),
            quality: 0.5,
            is_bot: false,
        };
        let sds: Vec<f64> = [0.9, 0.6, 0.4, 0.25, 0.1]
            .iter()
            .map(|&p| {
                let v: Vec<f64> = (0..20_000)
                    .map(|_| generate_rating(&honest(p), &ratee, &cfg, 0, &mut rng).unwrap().value)
                    .collect();
                crate::stats::sample_sd(&v)
            })
            .collect();
        assert!(sds.windows(2).all(|w| w[0] < w[1]), "{sds:?}");
    }

    #[test]
    fn conference_table_shape() {
        let cfg = WorldConfig::default();
        let mut rng = rng::stream(5, Purpose::Experiment, 0);
        let (world, t) = conference_table(&cfg, ConferenceShape::CCN_LIKE, &mut rng).unwrap();
        assert_eq!(t.len(), 527 * 9);
        for p in &world.papers {
            assert!(t.score(p.author, p.id).is_none());
        }
    }
}
