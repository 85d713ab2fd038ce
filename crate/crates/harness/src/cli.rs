//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{HarnessError, Result};
use crate::experiments::run_experiment;
use crate::oracles::run_all;
use crate::plot::emit_plot_data;
use crate::runs::write_json;

#[derive(Debug, Parser)]
#[command(
    name = "pib",
    version,
    about = "IIW tracking, PIB training and oracle checks"
)]
pub struct Cli {
    /// JSON experiment configuration; defaults apply to omitted keys.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Run this single seed instead of the configured list.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Activation,
    Depth,
    Width,
    Batch,
    Noise,
}

impl Axis {
    fn kind(self) -> ExperimentKind {
        match self {
            Axis::Activation => ExperimentKind::SweepActivation,
            Axis::Depth => ExperimentKind::SweepDepth,
            Axis::Width => ExperimentKind::SweepWidth,
            Axis::Batch => ExperimentKind::SweepBatch,
            Axis::Noise => ExperimentKind::SweepNoise,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train with SGD/Adam and record IIW.
    Track,
    /// Sample the PIB posterior with SGLD.
    PibTrain,
    /// Run the oracle pipelines and write `oracle_report.json`.
    OracleValidate,
    /// Sweep one axis; the axis may also come from the config's `experiment`.
    Sweep {
        #[arg(long, value_enum)]
        axis: Option<Axis>,
    },
    /// Compare vanilla, L2, dropout and PIB training.
    Compare,
    /// Merge metrics CSVs into long-format `series,x,y` rows.
    PlotData {
        /// Metrics CSVs to merge.
        csv: Vec<PathBuf>,
    },
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seeds = vec![s];
    }
    if let Some(o) = &cli.out {
        config.out = Some(o.clone());
    }
    Ok(config)
}

fn out_dir(config: &ExperimentConfig, kind: ExperimentKind) -> PathBuf {
    config
        .out
        .clone()
        .unwrap_or_else(|| Path::new("runs").join(kind.name()))
}

fn sweep_kind(config: &ExperimentConfig, axis: Option<Axis>) -> Result<ExperimentKind> {
    match (axis.map(Axis::kind), config.experiment) {
        (Some(k), _) => Ok(k),
        (None, Some(k)) if k.is_sweep() => Ok(k),
        (None, Some(k)) => Err(HarnessError::config(format!(
            "`sweep` needs a sweep experiment, config declares {:?}",
            k.name()
        ))),
        (None, None) => Err(HarnessError::config(
            "`sweep` needs --axis or a sweep experiment in the config",
        )),
    }
}

fn experiment(config: ExperimentConfig, kind: ExperimentKind) -> Result<()> {
    let config = config.with_kind(kind)?;
    let out = out_dir(&config, kind);
    let result = run_experiment(&config, Some(&out))?;
    for check in &result.aggregate.checks {
        println!(
            "{} {}/{} seeds: {}",
            if check.pass { "PASS" } else { "FAIL" },
            check.seeds_passing,
            check.seeds_total,
            check.name
        );
    }
    println!("wrote {}", out.join("aggregate.json").display());
    Ok(())
}

fn oracle_validate(config: ExperimentConfig) -> Result<()> {
    let config = config.with_kind(ExperimentKind::OracleValidate)?;
    let out = out_dir(&config, ExperimentKind::OracleValidate);
    std::fs::create_dir_all(&out).map_err(|e| HarnessError::io(&out, e))?;
    let report = run_all(&config.oracle, config.seeds[0])?;
    write_json(&out.join("oracle_report.json"), &report)?;
    for c in &report {
        println!(
            "{} {}/{}: {:e} (threshold {:e})",
            if c.pass { "PASS" } else { "FAIL" },
            c.pipeline_stage,
            c.metric,
            c.value,
            c.threshold
        );
    }
    let failed = report.iter().filter(|c| !c.pass).count();
    if failed > 0 {
        return Err(HarnessError::Validation(failed));
    }
    Ok(())
}

fn plot_data(cli: &Cli, csv: &[PathBuf]) -> Result<()> {
    let table = emit_plot_data(csv)?;
    match &cli.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
            let path = dir.join("plot_data.csv");
            std::fs::write(&path, table).map_err(|e| HarnessError::io(&path, e))
        }
        None => {
            print!("{table}");
            Ok(())
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Command::PlotData { csv } = &cli.command {
        return plot_data(&cli, csv);
    }
    let config = load(&cli)?;
    match &cli.command {
        Command::Track => experiment(config, ExperimentKind::Track),
        Command::PibTrain => experiment(config, ExperimentKind::PibTrain),
        Command::Compare => experiment(config, ExperimentKind::CompareRegularizers),
        Command::Sweep { axis } => {
            let kind = sweep_kind(&config, *axis)?;
            experiment(config, kind)
        }
        Command::OracleValidate => oracle_validate(config),
        Command::PlotData { .. } => unreachable!("handled above"),
    }
}
