use std::path::PathBuf;

use clap::Args;
use crowdreview_core::experiments::{self, Cell, Table};
use crowdreview_core::ingest::{self, Format};
use crowdreview_core::sim::{self, SimRun};
use crowdreview_core::table::{ExtraColumns, ReviewRecord};
use crowdreview_core::{Registry, ReviewTable, SimConfig, SimReport};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::output::{manifest_args, with_output, OutputDir};
use crate::{config, CliError, Common};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML file overriding the scenario's settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base settings: default, fig4, fig5, fig6, fig7 or suppfig4.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Overrides the world seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    /// Seed the first cohort with the best reviewers in the pool.
    #[arg(long)]
    pub warm_start: bool,
    /// Skip the per-replicate event logs.
    #[arg(long)]
    pub no_events: bool,
    /// Rerun exactly from an earlier manifest.
    #[arg(long, conflicts_with_all = ["config", "scenario", "seed", "warm_start"])]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

/// Everything needed to rerun; stored in the manifest.
#[derive(Debug, Serialize, Deserialize)]
struct Resolved {
    scenario: String,
    replicates: usize,
    events: bool,
    config: SimConfig,
}

fn resolve(a: &SimulateArgs) -> Result<Resolved, CliError> {
    if let Some(m) = &a.manifest {
        return serde_json::from_value(manifest_args(m, "simulate")?).map_err(|e| CliError::Data(e.to_string()));
    }
    let scenario = a.scenario.clone().unwrap_or_else(|| "default".into());
    let base = experiments::scenario(&scenario)?;
    let mut cfg = config::sim_config(base, a.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.world.seed = s;
    }
    if a.warm_start {
        cfg.warm_start = true;
    }
    Ok(Resolved {
        scenario,
        replicates: a.replicates,
        events: !a.no_events,
        config: cfg,
    })
}

pub fn run(a: SimulateArgs) -> Result<(), CliError> {
    let r = resolve(&a)?;
    r.config.validate()?;
    if r.replicates == 0 {
        return Err(CliError::Usage("--replicates must be at least 1".into()));
    }
    with_output(&a.common.out, a.common.format, "simulate", |out| {
        let runs: Vec<SimRun> = (0..r.replicates as u64)
            .into_par_iter()
            .map(|rep| sim::run_simulation(&r.config, rep))
            .collect::<Result<_, _>>()?;
        for w in runs.iter().flat_map(|run| &run.report.warnings) {
            eprintln!("warning: {w}");
        }
        write_outputs(out, &runs, r.events)?;
        Ok(json!(r))
    })
}

fn metrics_table(runs: &[SimRun]) -> Table {
    let mut t = Table::new(
        "metrics",
        &[
            "replicate",
            "year",
            "method",
            "correlation",
            "coverage",
            "n_published",
            "correlation_all",
            "n_estimated",
            "mse",
        ],
    );
    for (rep, run) in runs.iter().enumerate() {
        for y in &run.report.years {
            for m in &y.estimators {
                t.push(vec![
                    rep.into(),
                    y.year.into(),
                    m.method.name().into(),
                    m.correlation.into(),
                    m.coverage.into(),
                    m.n_published.into(),
                    m.correlation_all.into(),
                    m.n_estimated.into(),
                    m.mse.into(),
                ]);
            }
        }
    }
    t
}

fn years_table(runs: &[SimRun]) -> Table {
    let mut t = Table::new(
        "years",
        &[
            "replicate",
            "year",
            "live_users",
            "n_papers",
            "reviews_budgeted",
            "reviews_written",
            "reviews_total",
            "ratings_total",
            "gini",
            "max_share",
            "n_reference_papers",
            "bot_rating_mean",
            "human_rating_mean",
            "balanced_accuracy",
            "pool_hash",
        ],
    );
    for (rep, run) in runs.iter().enumerate() {
        for y in &run.report.years {
            t.push(vec![
                rep.into(),
                y.year.into(),
                y.live_users.into(),
                y.n_papers.into(),
                y.reviews_budgeted.into(),
                y.reviews_written.into(),
                y.reviews_total.into(),
                y.ratings_total.into(),
                y.gini.into(),
                y.max_share.into(),
                y.n_reference_papers.into(),
                y.quality.bot_mean.into(),
                y.quality.human_mean.into(),
                y.quality.balanced_accuracy.into(),
                Cell::from(run.report.pool_hash.as_str()),
            ]);
        }
    }
    t
}

/// Review log in the ingest format, with the year as an extra column.
pub fn review_log(run: &SimRun) -> ReviewTable {
    let records = run
        .reviews
        .iter()
        .map(|e| ReviewRecord {
            reviewer: e.reviewer,
            paper: e.paper,
            score: e.score,
            confidence: None,
        })
        .collect();
    let extras = ExtraColumns {
        names: vec!["year".into()],
        rows: run.reviews.iter().map(|e| vec![e.year.to_string()]).collect(),
    };
    ReviewTable::with_extras(records, Some(extras)).expect("simulated reviews are unique per pair")
}

fn rating_log(run: &SimRun) -> Table {
    let mut t = Table::new("ratings", &["rater_id", "ratee_id", "rating", "year"]);
    for e in &run.ratings {
        t.push(vec![e.rater.0.into(), e.ratee.0.into(), e.value.into(), e.year.into()]);
    }
    t
}

fn write_outputs(out: &mut OutputDir, runs: &[SimRun], events: bool) -> Result<(), CliError> {
    out.table("metrics", &metrics_table(runs))?;
    out.table("years", &years_table(runs))?;
    let reports: Vec<&SimReport> = runs.iter().map(|r| &r.report).collect();
    out.json("report.json", &json!({ "replicates": reports }))?;
    if !events {
        return Ok(());
    }
    for (rep, run) in runs.iter().enumerate() {
        let dir = format!("events/r{rep}");
        let reg = Registry::numeric(run.world.agents.len(), run.world.papers.len());
        let reviews = review_log(run);
        out.write_with(&format!("{dir}/reviews.csv"), |b| {
            ingest::write_review_table(b, &reviews, &reg, Format::Csv)
        })?;
        out.write_with(&format!("{dir}/ratings.csv"), |b| rating_log(run).write_csv(b))?;
        out.write_with(&format!("{dir}/authorship.csv"), |b| {
            ingest::write_authorship(b, &run.world.authorship(), &reg, Format::Csv)
        })?;
        let (mut agents, mut papers) = (Vec::new(), Vec::new());
        ingest::write_world(&mut agents, &mut papers, &run.world)?;
        out.write(&format!("{dir}/agents.csv"), &agents)?;
        out.write(&format!("{dir}/papers.csv"), &papers)?;
    }
    Ok(())
}
