//! Reproducible scenario presets.
//!
//! Each [`Figure`] pins a set of platform or conference settings, runs a
//! number of seeded replicates and returns flat [`Table`]s. Replicates run
//! in parallel but results are always assembled in replicate order, so the
//! output depends only on the seed and the replicate count.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::analysis::{self, AnalysisError, MetricRow, Normalization};
use crate::estimator::{self, EstimateError, ScoreSample};
use crate::genmodel::{self, ConferenceShape, GenError, WorldConfig};
use crate::quality::{self, QualityConfig, QualityError};
use crate::rng::{self, Purpose, SimRng};
use crate::sim::{self, AllocationPolicy, Method, SimConfig, SimError, SimReport, YearReport};
use crate::table::{PaperId, ReviewRecord, ReviewTable, UserId};

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("unknown figure {given:?}; known: {}", Figure::ALL.map(Figure::id).join(", "))]
    UnknownFigure { given: String },
    #[error("unknown scenario {given:?}; known: {}", SCENARIOS.join(", "))]
    UnknownScenario { given: String },
    #[error("replicate count must be at least 1")]
    NoReplicates,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Quality(#[from] QualityError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
}

/// One table cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Missing,
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Cell::Int(i) => Some(i as f64),
            Cell::Float(x) => Some(x),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Int(i) => Value::from(*i),
            Cell::Float(x) => serde_json::Number::from_f64(*x).map_or(Value::Null, Value::Number),
            Cell::Text(s) => Value::from(s.as_str()),
            Cell::Missing => Value::Null,
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(i) => write!(f, "{i}"),
            Cell::Float(x) => write!(f, "{x}"),
            Cell::Text(s) => f.write_str(s),
            Cell::Missing => Ok(()),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        if x.is_finite() {
            Cell::Float(x)
        } else {
            Cell::Missing
        }
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Missing, Cell::from)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u32> for Cell {
    fn from(x: u32) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

/// A named flat table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "{}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn write_csv(&self, out: impl Write) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::to_string))?;
        }
        w.flush()
    }

    /// Array of row objects.
    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let obj: Map<String, Value> = self
                        .columns
                        .iter()
                        .cloned()
                        .zip(row.iter().map(Cell::to_json))
                        .collect();
                    Value::Object(obj)
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    SuppFig4,
}

impl Figure {
    pub const ALL: [Figure; 8] = [
        Figure::Fig1,
        Figure::Fig2,
        Figure::Fig3,
        Figure::Fig4,
        Figure::Fig5,
        Figure::Fig6,
        Figure::Fig7,
        Figure::SuppFig4,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Figure::Fig1 => "fig1",
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
            Figure::Fig7 => "fig7",
            Figure::SuppFig4 => "suppfig4",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Figure::Fig1 => "pairwise reviewer agreement, normalizations and confidence strata",
            Figure::Fig2 => "abstract model: oracle vs history-estimated Bayes weights vs mean",
            Figure::Fig3 => "author quality vs reviewer quality on a conference-shaped table",
            Figure::Fig4 => "platform estimators vs bot fraction; direct-SD vs reviews per paper",
            Figure::Fig5 => "review concentration under CRP and reward-modulated CRP",
            Figure::Fig6 => "warm start vs random start over five years",
            Figure::Fig7 => "continuous vs binary vs five-fold binary ratings",
            Figure::SuppFig4 => "oracle weights with and without the certainty gate",
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Figure {
    type Err = ExperimentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Figure::ALL
            .into_iter()
            .find(|f| f.id() == s)
            .ok_or_else(|| ExperimentError::UnknownFigure { given: s.to_string() })
    }
}

/// Seed and replicate count shared by every preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentOptions {
    pub seed: u64,
    pub replicates: usize,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self { seed: 0, replicates: 20 }
    }
}

/// Named platform configurations, usable by `simulate`.
pub const SCENARIOS: [&str; 6] = ["default", "fig4", "fig5", "fig6", "fig7", "suppfig4"];

/// One publication year, one paper per user, three reviews and ten ratings
/// per user: about three reviews per paper.
pub fn fig4_config(bot_fraction: f64) -> SimConfig {
    let mut c = SimConfig {
        years: 1,
        initial_users: 500,
        initial_papers_per_user: 0,
        papers_per_user_year: 1,
        reviews_per_user_year: 3,
        ratings_per_user_year: 10,
        ..SimConfig::default()
    };
    c.world.bot_fraction = bot_fraction;
    c
}

/// One paper per user, twenty reviews each, self-selected via `policy`.
pub fn fig5_config(policy: AllocationPolicy) -> SimConfig {
    SimConfig {
        years: 1,
        initial_users: 500,
        initial_papers_per_user: 1,
        reviews_per_user_year: 20,
        allocation: policy,
        ..SimConfig::default()
    }
}

/// Platform defaults with 80% bots.
pub fn fig6_config(warm_start: bool) -> SimConfig {
    let mut c = SimConfig {
        warm_start,
        ..SimConfig::default()
    };
    c.world.bot_fraction = 0.8;
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingCondition {
    Continuous,
    Binary,
    Binary5x,
}

impl RatingCondition {
    pub const ALL: [RatingCondition; 3] = [RatingCondition::Continuous, RatingCondition::Binary, RatingCondition::Binary5x];

    pub fn name(self) -> &'static str {
        match self {
            RatingCondition::Continuous => "continuous",
            RatingCondition::Binary => "binary",
            RatingCondition::Binary5x => "binary_5x",
        }
    }
}

/// The fig4 platform run for five years at 50% bots, with no joins or exits.
pub fn fig7_config(condition: RatingCondition) -> SimConfig {
    let mut c = fig4_config(0.5);
    c.years = 5;
    c.joins_per_year = 0;
    c.churn_fraction = 0.0;
    match condition {
        RatingCondition::Continuous => {}
        RatingCondition::Binary => c.binary_ratings = true,
        RatingCondition::Binary5x => {
            c.binary_ratings = true;
            c.ratings_per_user_year *= 5;
        }
    }
    c
}

pub fn scenario(name: &str) -> Result<SimConfig, ExperimentError> {
    Ok(match name {
        "default" => SimConfig::default(),
        "fig4" | "suppfig4" => fig4_config(0.5),
        "fig5" => fig5_config(AllocationPolicy::Crp),
        "fig6" => fig6_config(false),
        "fig7" => fig7_config(RatingCondition::Continuous),
        _ => {
            return Err(ExperimentError::UnknownScenario {
                given: name.to_string(),
            })
        }
    })
}

fn with_seed(mut c: SimConfig, seed: u64) -> SimConfig {
    c.world.seed = seed;
    c
}

/// Runs `f` for each replicate index in parallel; results stay in index order.
pub fn replicates<T, F>(n: usize, f: F) -> Result<Vec<T>, ExperimentError>
where
    T: Send,
    F: Fn(u64) -> Result<T, ExperimentError> + Sync,
{
    if n == 0 {
        return Err(ExperimentError::NoReplicates);
    }
    (0..n as u64).into_par_iter().map(&f).collect()
}

pub fn reproduce(figure: Figure, opts: &ExperimentOptions) -> Result<Vec<Table>, ExperimentError> {
    match figure {
        Figure::Fig1 => fig1(opts),
        Figure::Fig2 => fig2(opts, &AbstractModel::default()),
        Figure::Fig3 => fig3(opts),
        Figure::Fig4 => fig4(opts),
        Figure::Fig5 => fig5(opts),
        Figure::Fig6 => fig6(opts),
        Figure::Fig7 => fig7(opts),
        Figure::SuppFig4 => suppfig4(opts),
    }
}

const METRIC_COLUMNS: [&str; 6] = ["replicate", "metric", "group", "value", "stderr", "n"];

fn metric_cells(rep: u64, row: MetricRow) -> Vec<Cell> {
    vec![
        rep.into(),
        row.metric.into(),
        row.group.map_or(Cell::Missing, Cell::from),
        row.value.into(),
        row.stderr.into(),
        row.n.map_or(Cell::Missing, Cell::from),
    ]
}

/// A conference-shaped table with review confidence on a 1–5 scale that
/// rises with the reviewer's true quality.
pub fn conference_with_confidence(
    world: &WorldConfig,
    shape: ConferenceShape,
    rng: &mut SimRng,
) -> Result<(genmodel::World, ReviewTable), GenError> {
    let (w, table) = genmodel::conference_table(world, shape, rng)?;
    let records = table
        .records()
        .iter()
        .map(|r| {
            let p = w.agents[r.reviewer.index()].effective_quality();
            ReviewRecord {
                confidence: Some((5.0 * p).ceil().clamp(1.0, 5.0)),
                ..*r
            }
        })
        .collect();
    let table = ReviewTable::new(records).expect("same keys as the source table");
    Ok((w, table))
}

fn fig1(opts: &ExperimentOptions) -> Result<Vec<Table>, ExperimentError> {
    let world = WorldConfig {
        seed: opts.seed,
        ..WorldConfig::default()
    };
    let per_rep = replicates(opts.replicates, |rep| {
        let mut rng = rng::stream(opts.seed, Purpose::Experiment, rep);
        let (_, table) = conference_with_confidence(&world, ConferenceShape::CCN_LIKE, &mut rng)?;
        let mut rows = vec![MetricRow::correlation("pairwise_r", &analysis::pairwise_reviewer_correlation(&table)?)
            .in_group("raw")];
        for m in Normalization::ALL {
            let norm = analysis::normalize_scores(&table, m);
            rows.push(
                MetricRow::correlation("pairwise_r", &analysis::pairwise_reviewer_correlation(&norm.table)?)
                    .in_group(m.name()),
            );
        }
        for s in analysis::confidence_stratified_correlation(&table)? {
            let group = format!("confidence_{}", s.level);
            match s.result {
                Some(c) => rows.push(MetricRow::correlation("stratum_r", &c).in_group(group.clone())),
                None => rows.push(MetricRow {
                    metric: "stratum_r".into(),
                    value: f64::NAN,
                    stderr: None,
                    n: Some(s.n_pairs),
                    group: Some(group.clone()),
                }),
            }
            rows.push(MetricRow::scalar("review_share", s.review_share).in_group(group));
        }
        rows.push(MetricRow::correlation(
            "confidence_score_r",
            &analysis::confidence_score_correlation(&table)?,
        ));
        Ok(rows)
    })?;
    let mut t = Table::new("fig1", &METRIC_COLUMNS);
    for (rep, rows) in per_rep.into_iter().enumerate() {
        for row in rows {
            t.push(metric_cells(rep as u64, row));
        }
    }
    Ok(vec![t])
}

/// Unbounded-score model: scores are `N(q, sigma_i)` with `sigma_i = alpha / p_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbstractModel {
    pub n_reviewers: usize,
    /// Prior reviews per reviewer used to estimate their spread.
    pub history: usize,
    /// Reviews per paper, in the history and in the evaluation set.
    pub reviews_per_paper: usize,
    pub n_papers: usize,
    pub world: WorldConfig,
}

impl Default for AbstractModel {
    fn default() -> Self {
        Self {
            n_reviewers: 200,
            history: 5,
            reviews_per_paper: 3,
            n_papers: 1000,
            world: WorldConfig::default(),
        }
    }
}

/// MSDs from true quality in one abstract-model replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbstractOutcome {
    pub simple_mean: f64,
    pub oracle_bayes: f64,
    pub empirical_bayes: f64,
    /// Mean over papers of the closed-form MSDs for the drawn reviewer sets.
    pub analytic_simple: f64,
    pub analytic_bayes: f64,
}

pub fn abstract_replicate(model: &AbstractModel, rng: &mut SimRng) -> Result<AbstractOutcome, ExperimentError> {
    let w = &model.world;
    let k = model.reviews_per_paper;
    if k == 0 || k > model.n_reviewers {
        return Err(GenError::Shape(format!("{k} reviews per paper from {} reviewers", model.n_reviewers)).into());
    }
    let sigmas: Vec<f64> = (0..model.n_reviewers)
        .map(|_| w.alpha / w.reviewer_quality.sample(rng).max(w.min_reviewer_quality))
        .collect();
    let draw = |rng: &mut SimRng, q: f64, i: usize| Normal::new(q, sigmas[i]).expect("positive sigma").sample(rng);

    // History: each reviewer appears `history` times, cycled over a shuffled order.
    let mut order: Vec<usize> = (0..model.n_reviewers).collect();
    order.shuffle(rng);
    let n_hist = (model.n_reviewers * model.history).div_ceil(k);
    let mut records = Vec::with_capacity(n_hist * k);
    for h in 0..n_hist {
        let q = w.paper_quality.sample(rng);
        for t in 0..k {
            let i = order[(h * k + t) % model.n_reviewers];
            records.push(ReviewRecord {
                reviewer: UserId(i as u32),
                paper: PaperId(h as u32),
                score: draw(rng, q, i),
                confidence: None,
            });
        }
    }
    let history = ReviewTable::new(records).expect("k <= reviewers keeps reviewers distinct per paper");
    let qcfg = QualityConfig::default();
    let estimated: Vec<f64> = (0..model.n_reviewers)
        .map(|i| {
            quality::empirical_sigma_from_history(&history, UserId(i as u32), model.history, &qcfg)
                .map(|q| q.sigma_hat)
        })
        .collect::<Result<_, _>>()?;

    let (mut se_mean, mut se_oracle, mut se_emp, mut a_simple, mut a_bayes) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..model.n_papers {
        let q = w.paper_quality.sample(rng);
        let who = sample(rng, model.n_reviewers, k).into_vec();
        let samples: Vec<ScoreSample> = who
            .iter()
            .map(|&i| ScoreSample::new(UserId(i as u32), draw(rng, q, i)))
            .collect();
        let true_s: Vec<f64> = who.iter().map(|&i| sigmas[i]).collect();
        let est_s: Vec<f64> = who.iter().map(|&i| estimated[i]).collect();
        se_mean += (estimator::simple_mean(&samples, None)?.mean - q).powi(2);
        se_oracle += (estimator::inverse_variance_mean(&samples, &true_s)?.mean - q).powi(2);
        se_emp += (estimator::inverse_variance_mean(&samples, &est_s)?.mean - q).powi(2);
        a_simple += estimator::msd_simple(&true_s, k)?;
        a_bayes += estimator::msd_bayes(&true_s)?;
    }
    let n = model.n_papers as f64;
    Ok(AbstractOutcome {
        simple_mean: se_mean / n,
        oracle_bayes: se_oracle / n,
        empirical_bayes: se_emp / n,
        analytic_simple: a_simple / n,
        analytic_bayes: a_bayes / n,
    })
}

pub fn fig2(opts: &ExperimentOptions, model: &AbstractModel) -> Result<Vec<Table>, ExperimentError> {
    let outcomes = replicates(opts.replicates, |rep| {
        abstract_replicate(model, &mut rng::stream(opts.seed, Purpose::Experiment, rep))
    })?;
    let mut t = Table::new(
        "fig2",
        &[
            "replicate",
            "oracle_bayes_msd",
            "empirical_bayes_msd",
            "simple_mean_msd",
            "analytic_bayes_msd",
            "analytic_simple_msd",
        ],
    );
    for (rep, o) in outcomes.into_iter().enumerate() {
        t.push(vec![
            rep.into(),
            o.oracle_bayes.into(),
            o.empirical_bayes.into(),
            o.simple_mean.into(),
            o.analytic_bayes.into(),
            o.analytic_simple.into(),
        ]);
    }
    Ok(vec![t])
}

fn fig3(opts: &ExperimentOptions) -> Result<Vec<Table>, ExperimentError> {
    let world = WorldConfig {
        seed: opts.seed,
        ..WorldConfig::default()
    };
    let qcfg = QualityConfig::default();
    let per_rep = replicates(opts.replicates, |rep| {
        let mut rng = rng::stream(opts.seed, Purpose::Experiment, rep);
        let (w, table) = genmodel::conference_table(&world, ConferenceShape::CCN_LIKE, &mut rng)?;
        let auth = w.authorship();
        let mut rows = vec![MetricRow::correlation(
            "author_vs_reviewer_r",
            &analysis::author_vs_reviewer_quality(&table, &auth, &qcfg)?,
        )];

        let weights = quality::author_quality_weights(&table, &auth, &qcfg);
        let direct = quality::direct_sigmas_excluding_paper(&table, &qcfg);
        let fallback = quality::pooled_msd(&table).map_or(1.0, |m| qcfg.floor_sigma(m));
        let mut se = [0.0f64; 4];
        let mut n = 0usize;
        for p in table.papers() {
            let idx = table.paper_records(p);
            let s: Vec<ScoreSample> = idx
                .iter()
                .map(|&i| {
                    let r = table.record(i as usize);
                    ScoreSample::new(r.reviewer, r.score)
                })
                .collect();
            let by_author: Vec<f64> = s.iter().map(|x| quality::sigma_from_weight(weights[&x.reviewer])).collect();
            let by_history: Vec<f64> = idx.iter().map(|&i| direct[i as usize].unwrap_or(fallback)).collect();
            let truth: Vec<f64> = s
                .iter()
                .map(|x| w.agents[x.reviewer.index()].true_sigma(world.alpha).unwrap_or(1.0))
                .collect();
            let q = w.papers[p.index()].quality;
            let est = [
                estimator::simple_mean(&s, None)?.mean,
                estimator::inverse_variance_mean(&s, &by_author)?.mean,
                estimator::inverse_variance_mean(&s, &by_history)?.mean,
                estimator::inverse_variance_mean(&s, &truth)?.mean,
            ];
            for (acc, e) in se.iter_mut().zip(est) {
                *acc += (e - q).powi(2);
            }
            n += 1;
        }
        for (name, v) in ["simple_mean", "author_weighted", "history_weighted", "oracle_weighted"]
            .into_iter()
            .zip(se)
        {
            rows.push(MetricRow {
                n: Some(n),
                ..MetricRow::scalar("msd_vs_truth", v / n as f64).in_group(name)
            });
        }
        for g in analysis::percentile_group_stats(&table, &auth, &analysis::PRESET_GROUPS, &qcfg)? {
            let label = format!("author_pct_{}", g.label());
            rows.push(MetricRow {
                stderr: Some(g.sd_msd / (g.n_users.max(1) as f64).sqrt()),
                n: Some(g.n_users),
                ..MetricRow::scalar("reviewer_msd", g.mean_msd).in_group(label.clone())
            });
            match g.pair_correlation {
                Some(c) => rows.push(MetricRow::correlation("pair_r", &c).in_group(label)),
                None => rows.push(MetricRow {
                    n: Some(g.n_pairs),
                    ..MetricRow::scalar("pair_r", f64::NAN).in_group(label)
                }),
            }
        }
        Ok(rows)
    })?;
    let mut t = Table::new("fig3", &METRIC_COLUMNS);
    for (rep, rows) in per_rep.into_iter().enumerate() {
        for row in rows {
            t.push(metric_cells(rep as u64, row));
        }
    }
    Ok(vec![t])
}

pub const FIG4_BOT_FRACTIONS: [f64; 9] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
/// Reviews per user (and so per paper) for the direct-SD comparison.
pub const FIG4_REVIEW_LEVELS: [usize; 3] = [3, 9, 20];

const ESTIMATOR_COLUMNS: [&str; 7] = [
    "method",
    "correlation",
    "coverage",
    "n_published",
    "correlation_all",
    "n_estimated",
    "mse",
];

fn estimator_cells(y: &YearReport) -> impl Iterator<Item = Vec<Cell>> + '_ {
    y.estimators.iter().map(|m| {
        vec![
            m.method.name().into(),
            m.correlation.into(),
            m.coverage.into(),
            m.n_published.into(),
            m.correlation_all.into(),
            m.n_estimated.into(),
            m.mse.into(),
        ]
    })
}

fn columns(prefix: &[&'static str], rest: &[&'static str]) -> Vec<&'static str> {
    prefix.iter().chain(rest).copied().collect()
}

fn fig4(opts: &ExperimentOptions) -> Result<Vec<Table>, ExperimentError> {
    // Cells: the bot sweep at 3 reviews, then the review-volume sweep at 50% bots.
    let mut cells: Vec<(f64, usize)> = FIG4_BOT_FRACTIONS.iter().map(|&b| (b, 3)).collect();
    cells.extend(FIG4_REVIEW_LEVELS.iter().filter(|&&r| r != 3).map(|&r| (0.5, r)));
    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| (0..opts.replicates as u64).map(move |r| (c, r)))
        .collect();
    if opts.replicates == 0 {
        return Err(ExperimentError::NoReplicates);
    }
    let reports: Vec<SimReport> = jobs
        .par_iter()
        .map(|&(c, rep)| {
            let (bots, reviews) = cells[c];
            let cfg = SimConfig {
                reviews_per_user_year: reviews,
                ..with_seed(fig4_config(bots), opts.seed)
            };
            Ok(sim::run_simulation(&cfg, rep)?.report)
        })
        .collect::<Result<_, ExperimentError>>()?;

    let key = ["bot_fraction", "reviews_per_user", "replicate"];
    let mut est = Table::new("fig4_estimators", &columns(&key, &ESTIMATOR_COLUMNS));
    let mut split = Table::new(
        "fig4_quality",
        &columns(&key, &["bot_mean", "human_mean", "balanced_accuracy", "n_bots", "n_humans"]),
    );
    let mut hist = Table::new("fig4_quality_hist", &columns(&key, &["group", "bin", "count"]));
    let mut bins = Table::new(
        "fig4_bins",
        &columns(
            &key,
            &["bin", "rating_lo", "rating_hi", "sigma_hat", "n_members", "n_deviations", "inherited"],
        ),
    );
    for (&(c, rep), report) in jobs.iter().zip(&reports) {
        let (bots, reviews) = cells[c];
        let k = || -> Vec<Cell> { vec![bots.into(), reviews.into(), rep.into()] };
        let y = report.last();
        for row in estimator_cells(y) {
            est.push(k().into_iter().chain(row).collect());
        }
        let q = &y.quality;
        split.push(
            k().into_iter()
                .chain([
                    q.bot_mean.into(),
                    q.human_mean.into(),
                    q.balanced_accuracy.into(),
                    q.bot_hist.iter().sum::<usize>().into(),
                    q.human_hist.iter().sum::<usize>().into(),
                ])
                .collect(),
        );
        for (group, h) in [("bot", &q.bot_hist), ("human", &q.human_hist)] {
            for (b, &count) in h.iter().enumerate() {
                hist.push(k().into_iter().chain([group.into(), b.into(), count.into()]).collect());
            }
        }
        for (b, s) in y.bins.iter().enumerate() {
            bins.push(
                k().into_iter()
                    .chain([
                        b.into(),
                        s.rating_lo.into(),
                        s.rating_hi.into(),
                        s.sigma_hat.into(),
                        s.n_members.into(),
                        s.n_deviations.into(),
                        s.inherited.into(),
                    ])
                    .collect(),
            );
        }
    }
    Ok(vec![est, split, hist, bins])
}

fn fig5(opts: &ExperimentOptions) -> Result<Vec<Table>, ExperimentError> {
    let policies = [AllocationPolicy::Crp, AllocationPolicy::RewardCrp];
    let runs = replicates(opts.replicates, |rep| {
        policies
            .iter()
            .map(|&p| {
                let run = sim::run_simulation(&with_seed(fig5_config(p), opts.seed), rep)?;
                let counts: Vec<usize> = {
                    let mut c = vec![0usize; run.world.papers.len()];
                    for e in &run.reviews {
                        c[e.paper.index()] += 1;
                    }
                    c
                };
                let conc = analysis::coverage_concentration(&counts)?;
                Ok((p, run.report, conc))
            })
            .collect::<Result<Vec<_>, ExperimentError>>()
    })?;
    let mut t = Table::new(
        "fig5",
        &[
            "replicate",
            "policy",
            "gini",
            "max_share",
            "papers_unreviewed",
            "bayes_binned_correlation",
            "bayes_binned_coverage",
            "simple_mean_correlation",
        ],
    );
    let mut h = Table::new("fig5_hist", &["replicate", "policy", "reviews", "papers"]);
    for (rep, conds) in runs.into_iter().enumerate() {
        for (p, report, conc) in conds {
            let y = report.last();
            let bb = y.metrics(Method::BayesBinned).expect("every method is evaluated");
            let sm = y.metrics(Method::SimpleMean).expect("every method is evaluated");
            let zero = conc.histogram.iter().find(|e| e.0 == 0).map_or(0, |e| e.1);
            t.push(vec![
                rep.into(),
                p.name().into(),
                y.gini.into(),
                y.max_share.into(),
                zero.into(),
                bb.correlation.into(),
                bb.coverage.into(),
                sm.correlation.into(),
            ]);
            for (reviews, papers) in conc.histogram {
                h.push(vec![rep.into(), p.name().into(), reviews.into(), papers.into()]);
            }
        }
    }
    Ok(vec![t, h])
}

fn fig6(opts: &ExperimentOptions) -> Result<Vec<Table>, ExperimentError> {
    let runs = replicates(opts.replicates, |rep| {
        [false, true]
            .into_iter()
            .map(|warm| Ok((warm, sim::run_simulation(&with_seed(fig6_config(warm), opts.seed), rep)?.report)))
            .collect::<Result<Vec<_>, ExperimentError>>()
    })?;
    let key = ["replicate", "condition", "year", "pool_hash"];
    let mut t = Table::new("fig6", &columns(&key, &ESTIMATOR_COLUMNS));
    for (rep, conds) in runs.into_iter().enumerate() {
        for (warm, report) in conds {
            let cond = if warm { "warm_start" } else { "baseline" };
            for y in &report.years {
                for row in estimator_cells(y) {
                    let k: Vec<Cell> = vec![rep.into(), cond.into(), y.year.into(), report.pool_hash.as_str().into()];
                    t.push(k.into_iter().chain(row).collect());
                }
            }
        }
    }
    Ok(vec![t])
}

fn fig7(opts: &ExperimentOptions) -> Result<Vec<Table>, ExperimentError> {
    let runs = replicates(opts.replicates, |rep| {
        RatingCondition::ALL
            .into_iter()
            .map(|c| Ok((c, sim::run_simulation(&with_seed(fig7_config(c), opts.seed), rep)?.report)))
            .collect::<Result<Vec<_>, ExperimentError>>()
    })?;
    let key = ["replicate", "condition", "year"];
    let mut t = Table::new("fig7", &columns(&key, &ESTIMATOR_COLUMNS));
    for (rep, conds) in runs.into_iter().enumerate() {
        for (c, report) in conds {
            for y in &report.years {
                for row in estimator_cells(y) {
                    let k: Vec<Cell> = vec![rep.into(), c.name().into(), y.year.into()];
                    t.push(k.into_iter().chain(row).collect());
                }
            }
        }
    }
    Ok(vec![t])
}

fn suppfig4(opts: &ExperimentOptions) -> Result<Vec<Table>, ExperimentError> {
    let jobs: Vec<(f64, u64)> = FIG4_BOT_FRACTIONS
        .iter()
        .flat_map(|&b| (0..opts.replicates as u64).map(move |r| (b, r)))
        .collect();
    if opts.replicates == 0 {
        return Err(ExperimentError::NoReplicates);
    }
    let reports: Vec<SimReport> = jobs
        .par_iter()
        .map(|&(b, rep)| Ok(sim::run_simulation(&with_seed(fig4_config(b), opts.seed), rep)?.report))
        .collect::<Result<_, ExperimentError>>()?;
    let mut t = Table::new(
        "suppfig4",
        &[
            "bot_fraction",
            "replicate",
            "gated_correlation",
            "ungated_correlation",
            "gated_coverage",
            "ungated_coverage",
        ],
    );
    for (&(b, rep), report) in jobs.iter().zip(&reports) {
        let y = report.last();
        let g = y.metrics(Method::Oracle).expect("every method is evaluated");
        let u = y.metrics(Method::OracleUngated).expect("every method is evaluated");
        t.push(vec![
            b.into(),
            rep.into(),
            g.correlation.into(),
            u.correlation.into(),
            g.coverage.into(),
            u.coverage.into(),
        ]);
    }
    Ok(vec![t])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_ids_round_trip() {
        for f in Figure::ALL {
            assert_eq!(f.id().parse::<Figure>().unwrap(), f);
        }
        let err = "fig9".parse::<Figure>().unwrap_err().to_string();
        assert!(err.contains("fig1") && err.contains("suppfig4"), "{err}");
    }

    #[test]
    fn scenarios_resolve() {
        for s in SCENARIOS {
            scenario(s).unwrap().validate().unwrap();
        }
        assert!(scenario("fig99").is_err());
    }

    #[test]
    fn fig7_conditions() {
        let b = fig7_config(RatingCondition::Binary5x);
        assert!(b.binary_ratings);
        assert_eq!(b.ratings_per_user_year, 50);
        assert_eq!(fig7_config(RatingCondition::Continuous).reviews_per_user_year, 3);
    }

    #[test]
    fn table_csv_and_json() {
        let mut t = Table::new("t", &["a", "b", "c"]);
        t.push(vec![1usize.into(), 0.1.into(), Cell::Missing]);
        let mut out = Vec::new();
        t.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "a,b,c\n1,0.1,\n");
        assert_eq!(t.to_json()[0]["b"], 0.1);
        assert!(t.to_json()[0]["c"].is_null());
    }

    #[test]
    fn replicate_order_is_stable() {
        let v = replicates(16, |r| Ok(r * 2)).unwrap();
        assert_eq!(v, (0..16).map(|r| r * 2).collect::<Vec<_>>());
        assert!(matches!(replicates(0, Ok::<u64, ExperimentError>), Err(ExperimentError::NoReplicates)));
    }

    #[test]
    fn abstract_model_beats_mean() {
        let m = AbstractModel {
            n_papers: 400,
            ..AbstractModel::default()
        };
        let o = abstract_replicate(&m, &mut rng::stream(3, Purpose::Experiment, 0)).unwrap();
        assert!(o.oracle_bayes < o.simple_mean);
        assert!(o.analytic_bayes <= o.analytic_simple);
    }

    #[test]
    fn small_reproductions_run() {
        let opts = ExperimentOptions { seed: 1, replicates: 2 };
        for f in [Figure::Fig1, Figure::Fig2, Figure::Fig3, Figure::Fig5, Figure::Fig7] {
            let tables = reproduce(f, &opts).unwrap();
            assert!(tables.iter().all(|t| !t.rows.is_empty()), "{f}");
        }
    }
}
