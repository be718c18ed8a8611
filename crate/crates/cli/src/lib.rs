//! `gridres` command-line pipeline.

pub mod config;
pub mod error;
pub mod log;
pub mod stages;
pub mod workspace;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use gridres_core::scenario::ScenarioSpec;
use gridres_core::HazardClass;

use crate::config::Config;
use crate::error::{CliError, EXIT_OK, EXIT_VALIDATION};
use crate::stages::Ctx;
use crate::workspace::Workspace;

#[derive(Debug, Parser)]
#[command(name = "gridres", version, about = "Weather-driven outage and restoration modelling")]
pub struct Cli {
    /// Workspace directory holding inputs, outputs and manifest.json.
    #[arg(long, global = true, default_value = ".")]
    pub workspace: PathBuf,
    /// Config file; defaults to <workspace>/config.json when present.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Rerun stages even when their inputs are unchanged.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean the raw input CSVs into clean/.
    Ingest,
    /// Build the wind and precipitation zone partitions and the density grid.
    Zones,
    /// Extract outage-restoration events, territory-wide and per zone.
    ExtractEvents,
    /// Link severe weather windows to intensities and outage counts.
    Link,
    /// Fit fragility and restoration models per zone.
    Fit {
        /// Write the published coefficient stores instead of fitting.
        #[arg(long)]
        published: bool,
    },
    /// Predict outages and restoration hours for a scenario.
    Predict {
        /// wind or precip; without it every configured scenario is run.
        #[arg(long, requires = "intensity")]
        hazard: Option<HazardClass>,
        #[arg(long, requires = "hazard")]
        intensity: Option<f64>,
    },
    /// Draw fitted models over their samples as SVG.
    Render,
    /// Write a seeded synthetic input bundle.
    Synth {
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run ingest through predict.
    RunAll,
}

impl Command {
    fn stage(&self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Zones => "zones",
            Command::ExtractEvents => "extract-events",
            Command::Link => "link",
            Command::Fit { .. } => "fit",
            Command::Predict { .. } => "predict",
            Command::Render => "render",
            Command::Synth { .. } => "synth",
            Command::RunAll => "run-all",
        }
    }
}

fn execute(cli: Cli) -> error::Result<()> {
    let cfg = Config::load(cli.config.as_deref(), &cli.workspace)?;
    let ws = Workspace::open(&cli.workspace)?;
    let mut ctx = Ctx { ws, cfg, force: cli.force };
    match cli.command {
        Command::Ingest => stages::ingest(&mut ctx).map(drop),
        Command::Zones => stages::zones(&mut ctx).map(drop),
        Command::ExtractEvents => stages::extract(&mut ctx).map(drop),
        Command::Link => stages::link(&mut ctx).map(drop),
        Command::Fit { published } => stages::fit(&mut ctx, published).map(drop),
        Command::Predict { hazard, intensity } => {
            let scenarios = match (hazard, intensity) {
                (Some(hazard_class), Some(intensity)) => vec![ScenarioSpec {
                    hazard_class,
                    intensity,
                    label: format!("{intensity} {} {hazard_class}", hazard_class.unit()),
                }],
                _ => ctx.cfg.scenarios.clone(),
            };
            if scenarios.is_empty() {
                return Err(CliError::validation("no scenario given and none configured"));
            }
            for s in &scenarios {
                if !(s.intensity.is_finite() && s.intensity >= 0.0) {
                    return Err(CliError::validation(format!(
                        "intensity must be finite and >= 0, got {}",
                        s.intensity
                    )));
                }
                let p = stages::predict(&mut ctx, s, false)?;
                print!("{}", stages::prediction_table(&p));
            }
            Ok(())
        }
        Command::Render => stages::render(&mut ctx).map(drop),
        Command::Synth { seed } => stages::synth(&mut ctx, seed).map(drop),
        Command::RunAll => stages::run_all(&mut ctx),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let stage = cli.command.stage();
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            log::error(stage, format!("{e:#}"));
            e.exit_code()
        }
    }
}
