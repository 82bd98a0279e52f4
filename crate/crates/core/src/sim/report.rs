use serde::{Deserialize, Serialize};

use super::scoring::{Estimates, Method};
use crate::quality::RatingBin;
use crate::stats;

/// How one scoring method did against the hidden paper qualities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorMetrics {
    pub method: Method,
    /// Pearson r over published papers; absent with fewer than two.
    pub correlation: Option<f64>,
    /// Published papers over all papers on the platform.
    pub coverage: f64,
    pub n_published: usize,
    /// Pearson r over every paper that received an estimate, published or not.
    pub correlation_all: Option<f64>,
    pub n_estimated: usize,
    /// Mean squared error of published estimates.
    pub mse: Option<f64>,
}

/// Scores estimates against `truth` (indexed by paper id).
pub fn evaluate(method: Method, estimates: &Estimates, truth: &[f64]) -> EstimatorMetrics {
    let mut pub_est = Vec::new();
    let mut pub_true = Vec::new();
    let mut all_est = Vec::new();
    let mut all_true = Vec::new();
    for (e, &q) in estimates.iter().zip(truth) {
        let Some(e) = e else { continue };
        all_est.push(e.mean);
        all_true.push(q);
        if e.published {
            pub_est.push(e.mean);
            pub_true.push(q);
        }
    }
    let mse = (!pub_est.is_empty()).then(|| {
        pub_est.iter().zip(&pub_true).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / pub_est.len() as f64
    });
    EstimatorMetrics {
        method,
        correlation: stats::pearson(&pub_est, &pub_true),
        coverage: if truth.is_empty() {
            0.0
        } else {
            pub_est.len() as f64 / truth.len() as f64
        },
        n_published: pub_est.len(),
        correlation_all: stats::pearson(&all_est, &all_true),
        n_estimated: all_est.len(),
        mse,
    }
}

pub const QUALITY_HIST_BINS: usize = 10;

/// Received-rating means of bots and honest users, side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualitySplit {
    /// Counts over `QUALITY_HIST_BINS` equal-width bins of `[0, 1]`.
    pub bot_hist: Vec<usize>,
    pub human_hist: Vec<usize>,
    pub bot_mean: Option<f64>,
    pub human_mean: Option<f64>,
    /// Best balanced accuracy of a single threshold separating the groups.
    pub balanced_accuracy: Option<f64>,
}

impl QualitySplit {
    pub fn new(bots: &[f64], humans: &[f64]) -> Self {
        let hist = |xs: &[f64]| {
            let mut h = vec![0; QUALITY_HIST_BINS];
            for &x in xs {
                let b = ((x * QUALITY_HIST_BINS as f64) as usize).min(QUALITY_HIST_BINS - 1);
                h[b] += 1;
            }
            h
        };
        let mean = |xs: &[f64]| (!xs.is_empty()).then(|| stats::mean(xs));
        Self {
            bot_hist: hist(bots),
            human_hist: hist(humans),
            bot_mean: mean(bots),
            human_mean: mean(humans),
            balanced_accuracy: (!bots.is_empty() && !humans.is_empty())
                .then(|| stats::best_threshold_balanced_accuracy(bots, humans)),
        }
    }
}

/// One rating bin as used for that year's scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub rating_lo: f64,
    pub rating_hi: f64,
    pub sigma_hat: f64,
    pub n_members: usize,
    pub n_deviations: usize,
    pub inherited: bool,
}

impl BinSummary {
    pub fn new(bin: &RatingBin, sigma_hat: f64) -> Self {
        Self {
            rating_lo: bin.rating_lo,
            rating_hi: bin.rating_hi,
            sigma_hat,
            n_members: bin.members.len(),
            n_deviations: bin.n_deviations,
            inherited: bin.inherited,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearReport {
    pub year: u32,
    pub live_users: usize,
    pub n_papers: usize,
    /// Sum over live users of min(budget, eligible papers).
    pub reviews_budgeted: usize,
    pub reviews_written: usize,
    pub reviews_total: usize,
    pub ratings_total: usize,
    pub gini: f64,
    pub max_share: f64,
    pub estimators: Vec<EstimatorMetrics>,
    pub quality: QualitySplit,
    pub bins: Vec<BinSummary>,
    pub n_reference_papers: usize,
}

impl YearReport {
    pub fn metrics(&self, method: Method) -> Option<&EstimatorMetrics> {
        self.estimators.iter().find(|m| m.method == method)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub years: Vec<YearReport>,
    /// SHA-256 of the sorted agent pool; equal across orderings of one pool.
    pub pool_hash: String,
    pub warnings: Vec<String>,
}

impl SimReport {
    pub fn year(&self, year: u32) -> Option<&YearReport> {
        self.years.iter().find(|y| y.year == year)
    }

    pub fn last(&self) -> &YearReport {
        self.years.last().expect("at least one year")
    }

    /// Published-paper correlation of `method` in `year`.
    pub fn correlation(&self, year: u32, method: Method) -> Option<f64> {
        self.year(year)?.metrics(method)?.correlation
    }
}
