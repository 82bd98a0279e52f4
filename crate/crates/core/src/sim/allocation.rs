//! Review allocation: which paper a reviewer picks next.

use std::collections::HashSet;

use rand::Rng;

use super::AllocationPolicy;
use crate::estimator::updated_variance;
use crate::rng::SimRng;
use crate::table::{PaperId, UserId};

/// Drop in a paper's score variance from one more review with spread `sigma_hat`.
pub fn reward_signal(current_variance: f64, sigma_hat: f64) -> f64 {
    (current_variance - updated_variance(current_variance, sigma_hat)).max(0.0)
}

/// Unnormalised selection weight of one paper.
pub fn selection_weight(policy: AllocationPolicy, reviews: usize, current_variance: f64, sigma_hat: f64) -> f64 {
    match policy {
        AllocationPolicy::Uniform => 1.0,
        AllocationPolicy::Crp => (reviews + 1) as f64,
        AllocationPolicy::RewardCrp => (reviews + 1) as f64 * reward_signal(current_variance, sigma_hat),
    }
}

/// Normalised selection probabilities over a set of eligible papers.
pub fn selection_probabilities(
    policy: AllocationPolicy,
    reviews: &[usize],
    variances: &[f64],
    sigma_hat: f64,
) -> Vec<f64> {
    let w: Vec<f64> = reviews
        .iter()
        .zip(variances)
        .map(|(&n, &v)| selection_weight(policy, n, v, sigma_hat))
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Fenwick tree over integer weights, for exact CRP sampling.
#[derive(Debug, Clone, Default)]
struct Fenwick {
    tree: Vec<u64>,
    total: u64,
}

impl Fenwick {
    fn push(&mut self, w: u64) {
        // Appending index i (1-based n) covers (n - lowbit(n), n].
        let n = self.tree.len() + 1;
        let low = n & n.wrapping_neg();
        let mut sum = w;
        let mut k = n - 1;
        let stop = n - low;
        while k > stop {
            sum += self.tree[k - 1];
            k -= k & k.wrapping_neg();
        }
        self.tree.push(sum);
        self.total += w;
    }

    fn add(&mut self, i: usize, w: u64) {
        let mut k = i + 1;
        while k <= self.tree.len() {
            self.tree[k - 1] += w;
            k += k & k.wrapping_neg();
        }
        self.total += w;
    }

    /// Index whose cumulative range contains `target` (< total).
    fn find(&self, mut target: u64) -> usize {
        let mut pos = 0;
        let mut step = self.tree.len().next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= self.tree.len() && self.tree[next - 1] <= target {
                target -= self.tree[next - 1];
                pos = next;
            }
            step >>= 1;
        }
        pos
    }
}

const REJECTION_TRIES: usize = 64;

/// Per-paper review counts and uncertainties, plus eligibility bookkeeping.
#[derive(Debug, Clone)]
pub struct Allocator {
    policy: AllocationPolicy,
    prior_variance: f64,
    authors: Vec<UserId>,
    counts: Vec<usize>,
    precision: Vec<f64>,
    tree: Fenwick,
    reviewed: HashSet<(UserId, PaperId)>,
    own: Vec<usize>,
    n_reviewed: Vec<usize>,
}

impl Allocator {
    pub fn new(policy: AllocationPolicy, prior_variance: f64, n_users: usize) -> Self {
        Self {
            policy,
            prior_variance,
            authors: Vec::new(),
            counts: Vec::new(),
            precision: Vec::new(),
            tree: Fenwick::default(),
            reviewed: HashSet::new(),
            own: vec![0; n_users],
            n_reviewed: vec![0; n_users],
        }
    }

    /// Registers the next paper (ids must be dense and in order).
    pub fn add_paper(&mut self, author: UserId) -> PaperId {
        let id = PaperId(self.authors.len() as u32);
        self.authors.push(author);
        self.counts.push(0);
        self.precision.push(1.0 / self.prior_variance);
        self.tree.push(1);
        self.own[author.index()] += 1;
        id
    }

    pub fn n_papers(&self) -> usize {
        self.authors.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn variance(&self, paper: PaperId) -> f64 {
        1.0 / self.precision[paper.index()]
    }

    pub fn is_eligible(&self, reviewer: UserId, paper: PaperId) -> bool {
        self.authors[paper.index()] != reviewer && !self.reviewed.contains(&(reviewer, paper))
    }

    /// Number of papers `reviewer` could still review.
    pub fn capacity(&self, reviewer: UserId) -> usize {
        self.authors.len() - self.own[reviewer.index()] - self.n_reviewed[reviewer.index()]
    }

    /// Draws a paper for `reviewer`, or `None` when nothing is eligible.
    /// `sigma_hint` is the reviewer's assumed spread, used by the reward policy.
    pub fn allocate(&self, reviewer: UserId, sigma_hint: f64, rng: &mut SimRng) -> Option<PaperId> {
        if self.capacity(reviewer) == 0 {
            return None;
        }
        match self.policy {
            AllocationPolicy::Uniform => {
                for _ in 0..REJECTION_TRIES {
                    let p = PaperId(rng.random_range(0..self.authors.len()) as u32);
                    if self.is_eligible(reviewer, p) {
                        return Some(p);
                    }
                }
                self.exact(reviewer, rng, |_| 1.0)
            }
            AllocationPolicy::Crp => {
                for _ in 0..REJECTION_TRIES {
                    let p = PaperId(self.tree.find(rng.random_range(0..self.tree.total)) as u32);
                    if self.is_eligible(reviewer, p) {
                        return Some(p);
                    }
                }
                self.exact(reviewer, rng, |j| (self.counts[j] + 1) as f64)
            }
            AllocationPolicy::RewardCrp => self.exact(reviewer, rng, |j| {
                selection_weight(self.policy, self.counts[j], 1.0 / self.precision[j], sigma_hint)
            }),
        }
    }

    /// Weighted draw over all eligible papers; uniform if every weight is zero.
    fn exact(&self, reviewer: UserId, rng: &mut SimRng, weight: impl Fn(usize) -> f64) -> Option<PaperId> {
        let eligible: Vec<(usize, f64)> = (0..self.authors.len())
            .filter(|&j| self.is_eligible(reviewer, PaperId(j as u32)))
            .map(|j| (j, weight(j)))
            .collect();
        if eligible.is_empty() {
            return None;
        }
        let total: f64 = eligible.iter().map(|e| e.1).sum();
        if !(total > 0.0) {
            let k = rng.random_range(0..eligible.len());
            return Some(PaperId(eligible[k].0 as u32));
        }
        let mut u = rng.random::<f64>() * total;
        for &(j, w) in &eligible {
            if u < w {
                return Some(PaperId(j as u32));
            }
            u -= w;
        }
        // Rounding left a sliver past the end: take the last positive weight.
        eligible.iter().rev().find(|e| e.1 > 0.0).map(|e| PaperId(e.0 as u32))
    }

    /// Books a review of `paper` by `reviewer` with assumed spread `sigma_hint`.
    pub fn record(&mut self, reviewer: UserId, paper: PaperId, sigma_hint: f64) {
        let j = paper.index();
        self.counts[j] += 1;
        self.precision[j] += 1.0 / (sigma_hint * sigma_hint);
        self.tree.add(j, 1);
        self.reviewed.insert((reviewer, paper));
        self.n_reviewed[reviewer.index()] += 1;
    }
}
