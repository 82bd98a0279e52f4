//! `analyze`: agreement, reviewer-quality and estimator metrics for review
//! files. Each analysis runs only when its inputs are present; the rest are
//! listed in `skipped` with the reason.

use std::fs::File;
use std::path::{Path, PathBuf};

use clap::Args;
use crowdreview_core::analysis::{self, MetricRow, Normalization};
use crowdreview_core::experiments::{Cell, Table};
use crowdreview_core::ingest::{self, RecordSchema};
use crowdreview_core::sim::{evaluate, Method, Scorer};
use crowdreview_core::table::RatingScale;
use crowdreview_core::{quality, Authorship, PaperId, RatingTable, Registry, ReviewTable, SimConfig, World};
use serde_json::json;

use crate::output::{with_output, OutputDir};
use crate::{config, CliError, Common};

pub const ANALYSES: [&str; 10] = [
    "pairwise_r",
    "normalizations",
    "confidence_strata",
    "confidence_score",
    "author_vs_reviewer",
    "percentile_groups",
    "coverage",
    "reviewer_quality",
    "estimates",
    "evaluate",
];

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Review table (`.csv` or `.jsonl`).
    #[arg(long)]
    pub reviews: PathBuf,
    /// Ratings of reviews by other users.
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    /// Author-to-paper table.
    #[arg(long)]
    pub authorship: Option<PathBuf>,
    /// Directory with `agents.csv` and `papers.csv` ground truth, as written
    /// by `simulate`. Ids in the other files must be the numeric ids used there.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// TOML column mapping and score range for the input files.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Platform config (TOML or a `simulate` manifest) for the estimator settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated subset of analyses (default: all).
    #[arg(long, value_delimiter = ',')]
    pub analyses: Option<Vec<String>>,
    #[command(flatten)]
    pub common: Common,
}

struct Inputs {
    registry: Registry,
    reviews: ReviewTable,
    /// Empty when no rating file was given; see `has_ratings`.
    ratings: RatingTable,
    has_ratings: bool,
    authorship: Option<Authorship>,
    truth: Option<World>,
    cfg: SimConfig,
}

fn load_truth(dir: &Path) -> Result<World, CliError> {
    let open = |name: &str| {
        let p = dir.join(name);
        File::open(&p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
    };
    Ok(ingest::load_world(open("agents.csv")?, open("papers.csv")?)?)
}

fn load(a: &AnalyzeArgs) -> Result<Inputs, CliError> {
    let cfg = config::sim_config(SimConfig::default(), a.config.as_deref())?;
    cfg.validate()?;
    let mut schema: RecordSchema = config::schema(a.schema.as_deref())?;
    if cfg.binary_ratings {
        schema.rating_scale = RatingScale::Binary;
    }
    let truth = a.truth.as_deref().map(load_truth).transpose()?;
    let mut registry = match &truth {
        Some(w) => Registry::numeric(w.agents.len(), w.papers.len()),
        None => Registry::default(),
    };
    let reviews = ingest::load_review_file(&a.reviews, &schema, &mut registry)?;
    let (ratings, has_ratings) = match a.ratings.as_deref() {
        Some(p) => (ingest::load_rating_file(p, &schema, &mut registry)?, true),
        None => (RatingTable::new(Vec::new(), schema.rating_scale).expect("empty table is valid"), false),
    };
    let mut authorship = a
        .authorship
        .as_deref()
        .map(|p| ingest::load_authorship_file(p, &schema, &mut registry))
        .transpose()?;
    if let Some(w) = &truth {
        if registry.users.len() > w.agents.len() || registry.papers.len() > w.papers.len() {
            return Err(CliError::Data(
                "input files reference ids absent from the ground truth".into(),
            ));
        }
    }
    if let Some(auth) = &authorship {
        ingest::check_authorship(auth, &reviews, &registry)?;
    }
    // Ground-truth authorship also lists papers nobody reviewed, so it skips the check.
    if let (None, Some(w)) = (&authorship, &truth) {
        authorship = Some(w.authorship());
    }
    Ok(Inputs {
        registry,
        reviews,
        ratings,
        has_ratings,
        authorship,
        truth,
        cfg,
    })
}

fn selected(a: &AnalyzeArgs) -> Result<Vec<&'static str>, CliError> {
    let Some(list) = &a.analyses else { return Ok(ANALYSES.to_vec()) };
    list.iter()
        .map(|name| {
            ANALYSES.iter().find(|&&k| k == name.trim()).copied().ok_or_else(|| {
                CliError::Usage(format!("unknown analysis {name:?} (known: {})", ANALYSES.join(", ")))
            })
        })
        .collect()
}

pub fn run(a: AnalyzeArgs) -> Result<(), CliError> {
    let names = selected(&a)?;
    let inputs = load(&a)?;
    let args = json!({
        "reviews": a.reviews,
        "ratings": a.ratings,
        "authorship": a.authorship,
        "truth": a.truth,
        "schema": a.schema,
        "config": inputs.cfg,
        "analyses": names,
    });
    with_output(&a.common.out, a.common.format, "analyze", |out| {
        Analyzer::new(&inputs).run_all(&names, out)?;
        Ok(args)
    })
}

const METRIC_COLUMNS: [&str; 6] = ["analysis", "metric", "group", "value", "stderr", "n"];

struct Analyzer<'a> {
    inp: &'a Inputs,
    metrics: Table,
    skipped: Table,
}

/// Why an analysis produced no rows.
enum Skip {
    Missing(&'static str),
    Failed(String),
}

impl<E: std::fmt::Display> From<E> for Skip {
    fn from(e: E) -> Self {
        Skip::Failed(e.to_string())
    }
}

impl<'a> Analyzer<'a> {
    fn new(inp: &'a Inputs) -> Self {
        Self {
            inp,
            metrics: Table::new("metrics", &METRIC_COLUMNS),
            skipped: Table::new("skipped", &["analysis", "reason"]),
        }
    }

    fn row(&mut self, analysis: &str, row: MetricRow) {
        self.metrics.push(vec![
            analysis.into(),
            row.metric.into(),
            row.group.map_or(Cell::Missing, Cell::from),
            row.value.into(),
            row.stderr.into(),
            row.n.map_or(Cell::Missing, Cell::from),
        ]);
    }

    fn run_all(mut self, names: &[&str], out: &mut OutputDir) -> Result<(), CliError> {
        let mut extra: Vec<Table> = Vec::new();
        for &name in names {
            let result = match name {
                "pairwise_r" => self.pairwise(),
                "normalizations" => self.normalizations(),
                "confidence_strata" => self.confidence_strata(),
                "confidence_score" => self.confidence_score(),
                "author_vs_reviewer" => self.author_vs_reviewer(),
                "percentile_groups" => self.percentile_groups(),
                "coverage" => self.coverage(),
                "reviewer_quality" => self.reviewer_quality().map(|t| extra.push(t)),
                "estimates" => self.estimates().map(|t| extra.push(t)),
                "evaluate" => self.evaluate(),
                _ => unreachable!("names are validated"),
            };
            let reason = match result {
                Ok(()) => continue,
                Err(Skip::Missing(what)) => format!("requires {what}"),
                Err(Skip::Failed(msg)) => msg,
            };
            eprintln!("skipped {name}: {reason}");
            self.skipped.push(vec![name.into(), reason.into()]);
        }
        out.table("metrics", &self.metrics)?;
        out.table("skipped", &self.skipped)?;
        for t in &extra {
            out.table(&t.name, t)?;
        }
        Ok(())
    }

    fn authorship(&self) -> Result<&'a Authorship, Skip> {
        self.inp.authorship.as_ref().ok_or(Skip::Missing("--authorship or --truth"))
    }

    fn need_confidence(&self) -> Result<(), Skip> {
        if self.inp.reviews.has_confidence() {
            Ok(())
        } else {
            Err(Skip::Missing("a confidence column in the review table"))
        }
    }

    fn pairwise(&mut self) -> Result<(), Skip> {
        let c = analysis::pairwise_reviewer_correlation(&self.inp.reviews)?;
        self.row("pairwise_r", MetricRow::correlation("pairwise_r", &c).in_group("raw"));
        Ok(())
    }

    fn normalizations(&mut self) -> Result<(), Skip> {
        for m in Normalization::ALL {
            let norm = analysis::normalize_scores(&self.inp.reviews, m);
            let c = analysis::pairwise_reviewer_correlation(&norm.table)?;
            self.row("normalizations", MetricRow::correlation("pairwise_r", &c).in_group(m.name()));
            self.row(
                "normalizations",
                MetricRow::scalar("flagged_reviewers", norm.flags.len() as f64).in_group(m.name()),
            );
        }
        Ok(())
    }

    fn confidence_strata(&mut self) -> Result<(), Skip> {
        self.need_confidence()?;
        for s in analysis::confidence_stratified_correlation(&self.inp.reviews)? {
            let group = format!("confidence_{}", s.level);
            let r = match s.result {
                Some(c) => MetricRow::correlation("stratum_r", &c),
                None => MetricRow {
                    n: Some(s.n_pairs),
                    ..MetricRow::scalar("stratum_r", f64::NAN)
                },
            };
            self.row("confidence_strata", r.in_group(group.clone()));
            self.row("confidence_strata", MetricRow::scalar("review_share", s.review_share).in_group(group));
        }
        Ok(())
    }

    fn confidence_score(&mut self) -> Result<(), Skip> {
        self.need_confidence()?;
        let c = analysis::confidence_score_correlation(&self.inp.reviews)?;
        self.row("confidence_score", MetricRow::correlation("confidence_score_r", &c));
        Ok(())
    }

    fn author_vs_reviewer(&mut self) -> Result<(), Skip> {
        let auth = self.authorship()?;
        let c = analysis::author_vs_reviewer_quality(&self.inp.reviews, auth, &self.inp.cfg.quality)?;
        self.row("author_vs_reviewer", MetricRow::correlation("author_vs_reviewer_r", &c));
        Ok(())
    }

    fn percentile_groups(&mut self) -> Result<(), Skip> {
        let auth = self.authorship()?;
        let groups =
            analysis::percentile_group_stats(&self.inp.reviews, auth, &analysis::PRESET_GROUPS, &self.inp.cfg.quality)?;
        for g in groups {
            let label = format!("author_pct_{}", g.label());
            self.row(
                "percentile_groups",
                MetricRow {
                    stderr: Some(g.sd_msd / (g.n_users.max(1) as f64).sqrt()),
                    n: Some(g.n_users),
                    ..MetricRow::scalar("reviewer_msd", g.mean_msd).in_group(label.clone())
                },
            );
            let r = match g.pair_correlation {
                Some(c) => MetricRow::correlation("pair_r", &c),
                None => MetricRow {
                    n: Some(g.n_pairs),
                    ..MetricRow::scalar("pair_r", f64::NAN)
                },
            };
            self.row("percentile_groups", r.in_group(label));
        }
        Ok(())
    }

    fn coverage(&mut self) -> Result<(), Skip> {
        let t = &self.inp.reviews;
        let counts: Vec<usize> = (0..self.inp.registry.papers.len())
            .map(|p| t.paper_records(PaperId(p as u32)).len())
            .collect();
        let c = analysis::coverage_concentration(&counts)?;
        let n = Some(counts.len());
        self.row("coverage", MetricRow { n, ..MetricRow::scalar("gini", c.gini) });
        self.row("coverage", MetricRow { n, ..MetricRow::scalar("max_share", c.max_share) });
        for (reviews, papers) in c.histogram {
            self.row(
                "coverage",
                MetricRow::scalar("papers_with_reviews", papers as f64).in_group(reviews.to_string()),
            );
        }
        Ok(())
    }

    fn scorer(&self) -> Scorer<'a> {
        let inp = self.inp;
        let agents = inp.truth.as_ref().map_or(&[][..], |w| &w.agents[..]);
        Scorer::new(&inp.reviews, &inp.ratings, agents, inp.registry.papers.len(), &inp.cfg)
    }

    /// Methods computable from the loaded inputs.
    fn methods(&self) -> Vec<Method> {
        Method::ALL
            .into_iter()
            .filter(|m| match m {
                Method::BayesBinned | Method::ThresholdTopPct => self.inp.has_ratings,
                Method::Oracle | Method::OracleUngated => self.inp.truth.is_some(),
                Method::SimpleMean | Method::BayesDirectSd => true,
            })
            .collect()
    }

    fn reviewer_quality(&mut self) -> Result<Table, Skip> {
        let reg = &self.inp.registry;
        let mut t = Table::new(
            "reviewers",
            &[
                "reviewer_id",
                "source",
                "msd_from_cas",
                "sigma_hat",
                "n_deviations",
                "rating_mean",
                "bin_index",
                "flagged",
            ],
        );
        let scorer = self.scorer();
        let binned = if self.inp.has_ratings { scorer.binned() } else { None };
        let rows: Vec<_> = match binned {
            Some(b) => {
                self.row(
                    "reviewer_quality",
                    MetricRow::scalar("n_reference_papers", b.n_reference_papers as f64),
                );
                self.row("reviewer_quality", MetricRow::scalar("n_bins", b.sigmas.bins.len() as f64));
                b.sigmas.reviewers.values().map(|q| ("ratings", *q)).collect()
            }
            None => self
                .inp
                .reviews
                .reviewers()
                .filter_map(|u| quality::reviewer_msd_from_cas(&self.inp.reviews, u, None, &self.inp.cfg.quality).ok())
                .map(|q| ("history", q))
                .collect(),
        };
        if rows.is_empty() {
            return Err(Skip::Failed("no reviewer has a usable review".into()));
        }
        let sigmas: Vec<f64> = rows.iter().map(|(_, q)| q.sigma_hat).collect();
        self.row(
            "reviewer_quality",
            MetricRow {
                n: Some(sigmas.len()),
                ..MetricRow::scalar("median_sigma_hat", crowdreview_core::stats::median(&sigmas))
            },
        );
        for (source, q) in rows {
            t.push(vec![
                reg.user_name(q.reviewer).into(),
                source.into(),
                q.msd_from_cas.into(),
                q.sigma_hat.into(),
                q.n_deviations.into(),
                q.rating_mean.into(),
                q.bin_index.map_or(Cell::Missing, Cell::from),
                q.flagged.into(),
            ]);
        }
        Ok(t)
    }

    fn estimates(&mut self) -> Result<Table, Skip> {
        let reg = &self.inp.registry;
        let scorer = self.scorer();
        let mut t = Table::new(
            "estimates",
            &["paper_id", "method", "mean", "sigma_total", "n_reviews", "published"],
        );
        for m in self.methods() {
            let est = scorer.score(m);
            let published = est.iter().flatten().filter(|e| e.published).count();
            self.row(
                "estimates",
                MetricRow {
                    n: Some(est.len()),
                    ..MetricRow::scalar("n_published", published as f64).in_group(m.name())
                },
            );
            for (j, e) in est.iter().enumerate() {
                let Some(e) = e else { continue };
                t.push(vec![
                    reg.paper_name(PaperId(j as u32)).into(),
                    m.name().into(),
                    e.mean.into(),
                    e.sigma_total.into(),
                    e.n_reviews.into(),
                    e.published.into(),
                ]);
            }
        }
        Ok(t)
    }

    fn evaluate(&mut self) -> Result<(), Skip> {
        let world = self.inp.truth.as_ref().ok_or(Skip::Missing("--truth"))?;
        let truth: Vec<f64> = world.papers.iter().map(|p| p.quality).collect();
        let scorer = self.scorer();
        for m in self.methods() {
            let e = evaluate(m, &scorer.score(m), &truth);
            let g = m.name();
            let opt = |v: Option<f64>| v.unwrap_or(f64::NAN);
            self.row(
                "evaluate",
                MetricRow {
                    n: Some(e.n_published),
                    ..MetricRow::scalar("correlation", opt(e.correlation)).in_group(g)
                },
            );
            self.row(
                "evaluate",
                MetricRow {
                    n: Some(e.n_estimated),
                    ..MetricRow::scalar("correlation_all", opt(e.correlation_all)).in_group(g)
                },
            );
            self.row(
                "evaluate",
                MetricRow {
                    n: Some(e.n_published),
                    ..MetricRow::scalar("coverage", e.coverage).in_group(g)
                },
            );
            self.row(
                "evaluate",
                MetricRow {
                    n: Some(e.n_estimated),
                    ..MetricRow::scalar("mse", opt(e.mse)).in_group(g)
                },
            );
        }
        Ok(())
    }
}
