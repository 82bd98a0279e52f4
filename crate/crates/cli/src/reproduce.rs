//! `reproduce` and `calibrate`.

use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use crowdreview_core::experiments::{self, ExperimentOptions, Figure};
use crowdreview_core::genmodel::{self, Calibration};
use crowdreview_core::SimConfig;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::output::{manifest_args, with_output};
use crate::{config, CliError, Common};

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    /// Scenario id (fig1 … fig7, suppfig4) or `all`.
    #[arg(required_unless_present = "manifest")]
    pub figure: Option<String>,
    /// Base seed (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Independent runs per condition (default 20).
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Rerun exactly from an earlier manifest.
    #[arg(long, conflicts_with_all = ["figure", "seed", "replicates"])]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Serialize, Deserialize)]
struct ReproducePlan {
    figures: Vec<String>,
    seed: u64,
    replicates: usize,
}

fn parse_figures(id: &str) -> Result<Vec<Figure>, CliError> {
    if id == "all" {
        return Ok(Figure::ALL.to_vec());
    }
    Ok(vec![id.parse::<Figure>()?])
}

pub fn run(a: ReproduceArgs) -> Result<(), CliError> {
    let (figures, opts) = match &a.manifest {
        Some(m) => {
            let plan: ReproducePlan = serde_json::from_value(manifest_args(m, "reproduce")?)
                .map_err(|e| CliError::Data(format!("{}: {e}", m.display())))?;
            let figs = plan
                .figures
                .iter()
                .map(|f| f.parse::<Figure>())
                .collect::<Result<Vec<_>, _>>()?;
            (figs, ExperimentOptions { seed: plan.seed, replicates: plan.replicates })
        }
        None => {
            let defaults = ExperimentOptions::default();
            let figs = parse_figures(a.figure.as_deref().unwrap_or("all"))?;
            let opts = ExperimentOptions {
                seed: a.seed.unwrap_or(defaults.seed),
                replicates: a.replicates.unwrap_or(defaults.replicates),
            };
            (figs, opts)
        }
    };
    if opts.replicates == 0 {
        return Err(CliError::Usage("--replicates must be at least 1".into()));
    }
    with_output(&a.common.out, a.common.format, "reproduce", |out| {
        for fig in &figures {
            let start = Instant::now();
            let tables = experiments::reproduce(*fig, &opts)?;
            for t in &tables {
                out.table(&format!("{}/{}", fig.id(), t.name), t)?;
            }
            eprintln!("{}: {} tables in {:.1}s", fig.id(), tables.len(), start.elapsed().as_secs_f64());
        }
        Ok(json!(ReproducePlan {
            figures: figures.iter().map(|f| f.id().to_string()).collect(),
            seed: opts.seed,
            replicates: opts.replicates,
        }))
    })
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Pairwise reviewer correlation to match.
    #[arg(long, default_value_t = 0.161)]
    pub target: f64,
    /// Platform config whose `[world]` section sets the quality distributions.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config's world seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Conference tables averaged per evaluation.
    #[arg(long, default_value_t = 4)]
    pub replicates: usize,
    /// Acceptable distance between the fitted and target correlation.
    #[arg(long, default_value_t = 0.002)]
    pub tolerance: f64,
    /// Rerun exactly from an earlier manifest.
    #[arg(long, conflicts_with_all = ["config", "seed"])]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Serialize, Deserialize)]
struct CalibratePlan {
    target: f64,
    calibration: Calibration,
    world: crowdreview_core::WorldConfig,
}

/// Seed used for the out-of-sample check of a calibration run at `seed`.
pub fn fresh_seed(seed: u64) -> u64 {
    seed.wrapping_add(0x5eed)
}

pub fn calibrate(a: CalibrateArgs) -> Result<(), CliError> {
    let plan = match &a.manifest {
        Some(m) => serde_json::from_value(manifest_args(m, "calibrate")?)
            .map_err(|e| CliError::Data(format!("{}: {e}", m.display())))?,
        None => {
            let mut world = config::sim_config(SimConfig::default(), a.config.as_deref())?.world;
            if let Some(s) = a.seed {
                world.seed = s;
            }
            CalibratePlan {
                target: a.target,
                calibration: Calibration {
                    replicates: a.replicates,
                    tolerance: a.tolerance,
                    ..Calibration::default()
                },
                world,
            }
        }
    };
    if plan.calibration.replicates == 0 {
        return Err(CliError::Usage("--replicates must be at least 1".into()));
    }
    let gen = |e: genmodel::GenError| match e {
        genmodel::GenError::InvalidTarget(_) => CliError::Usage(e.to_string()),
        other => CliError::Data(other.to_string()),
    };
    plan.world.validate().map_err(gen)?;
    with_output(&a.common.out, a.common.format, "calibrate", |out| {
        let cal = &plan.calibration;
        let alpha = genmodel::calibrate_alpha(plan.target, &plan.world, cal).map_err(gen)?;
        let r_fit = genmodel::pairwise_r_at(alpha, &plan.world, cal.shape, cal.replicates).map_err(gen)?;
        let fresh = crowdreview_core::WorldConfig {
            seed: fresh_seed(plan.world.seed),
            ..plan.world
        };
        let r_fresh = genmodel::pairwise_r_at(alpha, &fresh, cal.shape, cal.replicates).map_err(gen)?;
        println!("alpha = {alpha:.4}  r = {r_fit:.4}  r(fresh seed) = {r_fresh:.4}");
        out.json(
            "calibration.json",
            &json!({
                "target": plan.target,
                "alpha": alpha,
                "pairwise_r": r_fit,
                "fresh_seed": fresh.seed,
                "pairwise_r_fresh": r_fresh,
                "within_tolerance": (r_fit - plan.target).abs() <= cal.tolerance,
            }),
        )?;
        Ok(json!(plan))
    })
}
