use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::estimator::CertaintyPolicy;
use crate::genmodel::WorldConfig;
use crate::quality::QualityConfig;

/// How a reviewer picks the next paper to review.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AllocationPolicy {
    /// Every eligible paper equally likely.
    #[default]
    Uniform,
    /// Probability proportional to `reviews + 1`.
    Crp,
    /// Probability proportional to `(reviews + 1) * Δσ²_total`.
    RewardCrp,
}

impl AllocationPolicy {
    pub fn name(self) -> &'static str {
        match self {
            AllocationPolicy::Uniform => "uniform",
            AllocationPolicy::Crp => "crp",
            AllocationPolicy::RewardCrp => "reward_crp",
        }
    }
}

impl fmt::Display for AllocationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AllocationPolicy {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [AllocationPolicy::Uniform, AllocationPolicy::Crp, AllocationPolicy::RewardCrp]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| SimError::InvalidConfig(format!("unknown allocation policy {s:?}")))
    }
}

/// Everything a platform run depends on. The seed lives in `world.seed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub years: u32,
    pub initial_users: usize,
    /// Papers each user brings when joining.
    pub initial_papers_per_user: usize,
    pub joins_per_year: usize,
    /// Share of pre-existing users leaving at the start of each later year.
    pub churn_fraction: f64,
    /// Papers each live user publishes every year, after joining.
    pub papers_per_user_year: usize,
    pub reviews_per_user_year: usize,
    pub ratings_per_user_year: usize,
    pub binary_ratings: bool,
    pub binary_threshold: f64,
    /// Seed the first cohort with the best available reviewers.
    pub warm_start: bool,
    pub allocation: AllocationPolicy,
    pub review_cap: Option<usize>,
    /// Certainty gate bound on `sigma_total`.
    pub sigma_max: f64,
    /// Score variance assumed for a paper with no reviews.
    pub prior_variance: f64,
    /// Reviewer spread assumed by the allocation reward before any estimate exists.
    pub default_sigma_hint: f64,
    pub quality: QualityConfig,
    pub world: WorldConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            years: 5,
            initial_users: 500,
            initial_papers_per_user: 20,
            joins_per_year: 2000,
            churn_fraction: 0.10,
            papers_per_user_year: 0,
            reviews_per_user_year: 3,
            ratings_per_user_year: 10,
            binary_ratings: false,
            binary_threshold: 0.5,
            warm_start: false,
            allocation: AllocationPolicy::Uniform,
            review_cap: None,
            sigma_max: CertaintyPolicy::DEFAULT_SIGMA_MAX,
            prior_variance: 1.0 / 12.0,
            default_sigma_hint: 0.25,
            quality: QualityConfig::default(),
            world: WorldConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        self.world.validate()?;
        if self.years == 0 {
            return bad("years must be at least 1".into());
        }
        if self.initial_users == 0 {
            return bad("initial_users must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.churn_fraction) {
            return bad(format!("churn_fraction {} outside [0, 1]", self.churn_fraction));
        }
        if !(0.0..=1.0).contains(&self.binary_threshold) {
            return bad(format!("binary_threshold {} outside [0, 1]", self.binary_threshold));
        }
        if !(self.prior_variance > 0.0 && self.prior_variance.is_finite()) {
            return bad(format!("prior_variance must be positive, got {}", self.prior_variance));
        }
        if !(self.default_sigma_hint > 0.0 && self.default_sigma_hint.is_finite()) {
            return bad(format!("default_sigma_hint must be positive, got {}", self.default_sigma_hint));
        }
        if !(self.quality.sigma_floor > 0.0) {
            return bad("quality.sigma_floor must be positive".into());
        }
        if self.quality.n_bins == 0 {
            return bad("quality.n_bins must be at least 1".into());
        }
        CertaintyPolicy::new(self.sigma_max).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    pub fn certainty(&self) -> CertaintyPolicy {
        CertaintyPolicy::new(self.sigma_max).expect("validated")
    }

    /// Reviews each live user writes per year.
    pub fn review_budget(&self) -> usize {
        match self.review_cap {
            Some(cap) => self.reviews_per_user_year.min(cap),
            None => self.reviews_per_user_year,
        }
    }

    /// Size of the agent pool drawn up front: the first cohort plus all later joiners.
    pub fn pool_size(&self) -> usize {
        self.initial_users + self.joins_per_year * (self.years as usize - 1)
    }
}
