//! Synthetic workloads shared by the benchmarks.

use crowdreview_core::table::{RatingRecord, RatingScale, ReviewRecord};
use crowdreview_core::{PaperId, RatingTable, ReviewTable, UserId};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n_papers` papers with `per_paper` distinct random reviewers each, plus
/// `ratings_per_user` random ratings per reviewer.
pub fn workload(
    n_reviewers: usize,
    n_papers: usize,
    per_paper: usize,
    ratings_per_user: usize,
    seed: u64,
) -> (ReviewTable, RatingTable) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reviews = Vec::with_capacity(n_papers * per_paper);
    for p in 0..n_papers {
        for r in sample(&mut rng, n_reviewers, per_paper.min(n_reviewers)) {
            reviews.push(ReviewRecord {
                reviewer: UserId(r as u32),
                paper: PaperId(p as u32),
                score: rng.random(),
                confidence: None,
            });
        }
    }
    let mut ratings = Vec::with_capacity(n_reviewers * ratings_per_user);
    for rater in 0..n_reviewers {
        for _ in 0..ratings_per_user {
            let ratee = (rater + 1 + rng.random_range(0..n_reviewers - 1)) % n_reviewers;
            ratings.push(RatingRecord {
                rater: UserId(rater as u32),
                ratee: UserId(ratee as u32),
                value: rng.random(),
            });
        }
    }
    (
        ReviewTable::new(reviews).expect("distinct reviewers per paper"),
        RatingTable::new(ratings, RatingScale::Continuous).expect("no self ratings"),
    )
}
