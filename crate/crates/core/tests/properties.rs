//! Generative-model and platform invariants over random configurations.

use std::collections::HashSet;

use crowdreview_core::genmodel::{self, sample_agents};
use crowdreview_core::rng::{self, Purpose};
use crowdreview_core::sim::{self, run_simulation};
use crowdreview_core::stats;
use crowdreview_core::{Agent, ClampMode, PaperId, PaperTruth, SimConfig, UserId, WorldConfig};
use proptest::prelude::*;

fn small_config(seed: u64, bots: f64, churn: f64, reviews: usize, cap: Option<usize>) -> SimConfig {
    SimConfig {
        years: 3,
        initial_users: 40,
        initial_papers_per_user: 1,
        joins_per_year: 15,
        churn_fraction: churn,
        papers_per_user_year: 1,
        reviews_per_user_year: reviews,
        ratings_per_user_year: 3,
        review_cap: cap,
        world: WorldConfig {
            seed,
            bot_fraction: bots,
            ..WorldConfig::default()
        },
        ..SimConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn draws_stay_in_unit_interval(
        seed in any::<u64>(),
        alpha in 0.01f64..3.0,
        p in 0.05f64..1.0,
        q in 0.0f64..=1.0,
        clamp in any::<bool>(),
    ) {
        let cfg = WorldConfig {
            alpha,
            clamp_mode: if clamp { ClampMode::Clamp } else { ClampMode::Resample },
            ..WorldConfig::default()
        };
        let agent = Agent { id: UserId(0), quality: p, is_bot: false };
        let paper = PaperTruth { id: PaperId(0), quality: q, author: UserId(1) };
        let mut rng = rng::stream(seed, Purpose::World, 0);
        for _ in 0..50 {
            let v = genmodel::generate_review(&agent, &paper, &cfg, 1, &mut rng).unwrap().value;
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn platform_budget_and_churn(
        seed in 0u64..1000,
        bots in 0.0f64..0.9,
        churn in 0.0f64..0.5,
        reviews in 1usize..5,
        cap in proptest::option::of(1usize..4),
    ) {
        let cfg = small_config(seed, bots, churn, reviews, cap);
        let run = run_simulation(&cfg, 0).unwrap();
        let budget = cfg.review_budget();
        let mut prev_live = 0;
        for y in &run.report.years {
            // Every live user has far more eligible papers than the budget here.
            prop_assert_eq!(y.reviews_budgeted, y.live_users * budget);
            prop_assert_eq!(y.reviews_written, y.reviews_budgeted);
            if y.year > 1 {
                let gone = (churn * prev_live as f64).round() as usize;
                prop_assert_eq!(y.live_users, prev_live - gone + cfg.joins_per_year);
            }
            prev_live = y.live_users;
        }
        // Reviews of departed users stay in the log.
        let total: usize = run.report.years.iter().map(|y| y.reviews_written).sum();
        prop_assert_eq!(run.reviews.len(), total);
        // Nobody reviews their own paper or the same paper twice.
        let mut seen = HashSet::new();
        for e in &run.reviews {
            prop_assert!(run.world.papers[e.paper.index()].author != e.reviewer);
            prop_assert!(seen.insert((e.reviewer, e.paper)));
            prop_assert!((0.0..=1.0).contains(&e.score));
        }
        for r in &run.ratings {
            prop_assert!(r.rater != r.ratee);
        }
    }

    #[test]
    fn warm_start_permutes_the_same_pool(seed in 0u64..1000, bots in 0.0f64..0.9) {
        let base = small_config(seed, bots, 0.1, 2, None);
        let warm = SimConfig { warm_start: true, ..base };
        let a = run_simulation(&base, 2).unwrap();
        let b = run_simulation(&warm, 2).unwrap();
        let multiset = |agents: &[Agent]| {
            let mut v: Vec<(u64, bool)> = agents.iter().map(|x| (x.quality.to_bits(), x.is_bot)).collect();
            v.sort();
            v
        };
        prop_assert_eq!(multiset(&a.world.agents), multiset(&b.world.agents));
        prop_assert_eq!(&a.report.pool_hash, &b.report.pool_hash);
        let mut order = b.join_order.clone();
        order.sort();
        prop_assert_eq!(order, a.join_order.clone());
    }

    #[test]
    fn runs_are_reproducible(seed in 0u64..1000, rep in 0u64..8) {
        let cfg = small_config(seed, 0.3, 0.1, 2, None);
        prop_assert_eq!(run_simulation(&cfg, rep).unwrap(), run_simulation(&cfg, rep).unwrap());
    }
}

#[test]
fn bots_ignore_the_truth() {
    let cfg = WorldConfig::default();
    let mut rng = rng::stream(5, Purpose::World, 0);
    let bot = Agent {
        id: UserId(0),
        quality: 0.9,
        is_bot: true,
    };
    let mut qs = Vec::with_capacity(100_000);
    let mut vs = Vec::with_capacity(100_000);
    for j in 0..100_000u32 {
        let q = cfg.paper_quality.sample(&mut rng);
        let paper = PaperTruth {
            id: PaperId(j),
            quality: q,
            author: UserId(1),
        };
        qs.push(q);
        vs.push(genmodel::generate_review(&bot, &paper, &cfg, 1, &mut rng).unwrap().value);
    }
    let r = stats::pearson(&qs, &vs).unwrap();
    assert!(r.abs() < 0.01, "r = {r}");
}

#[test]
fn honest_reviews_center_on_quality() {
    // Resampling truncates N(q, alpha / p) to [0, 1], here at 2.5 sd either side.
    let cfg = WorldConfig::default();
    let mut rng = rng::stream(6, Purpose::World, 0);
    let agent = Agent {
        id: UserId(0),
        quality: 0.9,
        is_bot: false,
    };
    let paper = PaperTruth {
        id: PaperId(0),
        quality: 0.5,
        author: UserId(1),
    };
    let v: Vec<f64> = (0..100_000)
        .map(|_| genmodel::generate_review(&agent, &paper, &cfg, 1, &mut rng).unwrap().value)
        .collect();
    let sd = 0.18 / 0.9;
    assert!((stats::mean(&v) - 0.5).abs() < 4.0 * sd / (v.len() as f64).sqrt());
    // Truncated variance factor 1 - 2a phi(a) / (2 Phi(a) - 1) at a = 2.5.
    let truncated = sd * (1.0f64 - 0.088_75).sqrt();
    let got = stats::sample_sd(&v);
    assert!((got - truncated).abs() / truncated < 0.01, "sd {got} vs {truncated}");
}

#[test]
fn agent_pools_respect_quality_floor() {
    let cfg = WorldConfig {
        bot_fraction: 0.3,
        ..WorldConfig::default()
    };
    let agents = sample_agents(&cfg, 5000, &mut rng::stream(7, Purpose::World, 0)).unwrap();
    assert!(agents.iter().filter(|a| !a.is_bot).all(|a| a.quality >= cfg.min_reviewer_quality));
    let bots = agents.iter().filter(|a| a.is_bot).count();
    assert_eq!(bots, 1500);
}

#[test]
fn pool_hash_ignores_order() {
    let cfg = WorldConfig::default();
    let mut agents = sample_agents(&cfg, 50, &mut rng::stream(8, Purpose::World, 0)).unwrap();
    let h = sim::pool_hash(&agents);
    agents.reverse();
    assert_eq!(sim::pool_hash(&agents), h);
    agents[0].quality += 1e-9;
    assert_ne!(sim::pool_hash(&agents), h);
}
