//! Multi-seed experiments: single runs, sweeps and the regularizer
//! comparison, plus the aggregate written next to the per-run artifacts.
//!
//! Layout under the output directory:
//!
//! ```text
//! config.json
//! aggregate.json
//! <cell>/seed_<s>/{metrics.csv, summary.json, checkpoint.bin, timing.txt}
//! ```

use std::path::{Path, PathBuf};

use pib_core::iiw::TrackConfig;
use pib_core::pib::SgldConfig;
use serde::{Deserialize, Serialize};

use crate::config::{DatasetConfig, ExperimentConfig, ExperimentKind, Method, NetworkConfig};
use crate::data::prepare;
use crate::error::{HarnessError, Result};
use crate::runs::{run_pib, run_track, write_json, Label, RunSummary};

#[derive(Debug, Clone, PartialEq)]
pub enum Job {
    Track(TrackConfig),
    Pib(SgldConfig),
}

/// One point of an experiment grid, run once per seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub name: String,
    /// Position on the swept axis, when there is one.
    pub axis_value: Option<f64>,
    pub dataset: DatasetConfig,
    pub network: NetworkConfig,
    pub job: Job,
}

fn fmt_value(v: f64) -> String {
    format!("{v}")
}

/// Expands `config` into its grid of cells.
pub fn cells(config: &ExperimentConfig) -> Result<Vec<Cell>> {
    let kind = config
        .experiment
        .ok_or_else(|| HarnessError::config("no experiment kind given"))?;
    let base = |name: String, axis_value: Option<f64>| Cell {
        name,
        axis_value,
        dataset: config.dataset.clone(),
        network: config.network.clone(),
        job: Job::Track(config.track.clone()),
    };
    let sweep = &config.sweep;
    let out = match kind {
        ExperimentKind::Track => vec![base("track".into(), None)],
        ExperimentKind::PibTrain => {
            let mut c = base("pib".into(), None);
            c.job = Job::Pib(config.sgld.clone());
            vec![c]
        }
        ExperimentKind::OracleValidate => {
            return Err(HarnessError::config(
                "oracle_validate has no training cells",
            ))
        }
        ExperimentKind::SweepActivation => sweep
            .activations
            .iter()
            .map(|&a| {
                let mut c = base(format!("activation_{}", a.name()), None);
                c.network.activation = a;
                c
            })
            .collect(),
        ExperimentKind::SweepDepth => {
            let width = config.network.hidden.first().copied().unwrap_or(64);
            sweep
                .depths
                .iter()
                .map(|&d| {
                    let mut c = base(format!("depth_{d}"), Some(d as f64));
                    c.network.hidden = vec![width; d - 1];
                    c
                })
                .collect()
        }
        ExperimentKind::SweepWidth => sweep
            .widths
            .iter()
            .map(|&w| {
                let mut c = base(format!("width_{w}"), Some(w as f64));
                let layers = config.network.hidden.len().max(1);
                c.network.hidden = vec![w; layers];
                c
            })
            .collect(),
        ExperimentKind::SweepBatch => sweep
            .batch_sizes
            .iter()
            .map(|&b| {
                let mut c = base(format!("batch_{b}"), Some(b as f64));
                if let Job::Track(t) = &mut c.job {
                    t.batch_size = b;
                }
                c
            })
            .collect(),
        ExperimentKind::SweepNoise => sweep
            .noise_ratios
            .iter()
            .map(|&r| {
                let mut c = base(format!("noise_{}", fmt_value(r)), Some(r));
                c.dataset.noise_ratio = r;
                c
            })
            .collect(),
        ExperimentKind::CompareRegularizers => config
            .compare
            .methods
            .iter()
            .map(|&m| {
                let mut c = base(m.name().into(), None);
                let mut track = config.track.clone();
                track.weight_decay = 0.0;
                track.dropout = 0.0;
                c.job = match m {
                    Method::Vanilla => Job::Track(track),
                    Method::L2 => Job::Track(TrackConfig {
                        weight_decay: config.compare.weight_decay,
                        ..track
                    }),
                    Method::Dropout => Job::Track(TrackConfig {
                        dropout: config.compare.dropout,
                        ..track
                    }),
                    Method::Pib => Job::Pib(config.sgld.clone()),
                };
                c
            })
            .collect(),
    };
    for (i, c) in out.iter().enumerate() {
        if out[..i].iter().any(|o| o.name == c.name) {
            return Err(HarnessError::config(format!(
                "grid lists `{}` twice",
                c.name
            )));
        }
    }
    Ok(out)
}

/// Mean with a normal-approximation 95% interval, `mean +- 1.96 stderr`.
/// The interval is `None` for fewer than two values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub n: usize,
}

impl Stat {
    /// `None` when `values` is empty.
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = pib_core::stats::mean(values);
        let half = (n > 1).then(|| 1.96 * pib_core::stats::std_error(values));
        Some(Stat {
            mean,
            ci_low: half.map(|h| mean - h),
            ci_high: half.map(|h| mean + h),
            n,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAggregate {
    pub cell: String,
    pub axis_value: Option<f64>,
    pub runs: usize,
    /// Diverged runs are excluded from the statistics below.
    pub diverged: usize,
    pub final_train_acc: Option<Stat>,
    pub final_test_acc: Option<Stat>,
    /// Posterior-ensemble accuracy for SGLD cells, final accuracy otherwise.
    pub headline_test_acc: Option<Stat>,
    pub gap: Option<Stat>,
    pub final_iiw: Option<Stat>,
    pub peak_iiw: Option<Stat>,
}

/// A per-seed directional claim and how many seeds satisfy it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub description: String,
    pub seeds_passing: usize,
    pub seeds_total: usize,
    /// Strict majority of seeds.
    pub pass: bool,
}

impl Check {
    fn new(name: String, description: String, per_seed: &[bool]) -> Self {
        let passing = per_seed.iter().filter(|&&b| b).count();
        Self {
            name,
            description,
            seeds_passing: passing,
            seeds_total: per_seed.len(),
            pass: 2 * passing > per_seed.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub experiment: String,
    pub seeds: Vec<u64>,
    pub cells: Vec<CellAggregate>,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub aggregate: Aggregate,
    /// `runs[cell][seed]`, in grid and seed order.
    pub runs: Vec<Vec<RunSummary>>,
}

pub fn cell_dir(out: &Path, cell: &str, seed: u64) -> PathBuf {
    out.join(cell).join(format!("seed_{seed}"))
}

fn finite(values: impl Iterator<Item = Option<f64>>) -> Vec<f64> {
    values.flatten().filter(|v| v.is_finite()).collect()
}

fn aggregate_cell(cell: &Cell, runs: &[RunSummary]) -> CellAggregate {
    let ok: Vec<&RunSummary> = runs.iter().filter(|r| r.divergence.is_none()).collect();
    let stat = |f: &dyn Fn(&RunSummary) -> Option<f64>| Stat::of(&finite(ok.iter().map(|r| f(r))));
    CellAggregate {
        cell: cell.name.clone(),
        axis_value: cell.axis_value,
        runs: runs.len(),
        diverged: runs.len() - ok.len(),
        final_train_acc: stat(&|r| Some(r.final_train_acc)),
        final_test_acc: stat(&|r| Some(r.final_test_acc)),
        headline_test_acc: stat(&|r| Some(r.headline_test_acc())),
        gap: stat(&|r| Some(r.gap)),
        final_iiw: stat(&|r| r.final_iiw),
        peak_iiw: stat(&|r| r.peak_iiw),
    }
}

/// Peak in the first half of training and a final reading at most 70% of it.
pub fn shows_phase_transition(r: &RunSummary) -> bool {
    r.divergence.is_none()
        && matches!(
            (r.peak_fraction, r.final_iiw, r.peak_iiw),
            (Some(frac), Some(last), Some(peak)) if frac < 0.5 && last <= 0.7 * peak
        )
}

/// Final IIW strictly increasing along `runs`.
pub fn strictly_increasing_iiw(runs: &[&RunSummary]) -> bool {
    let values: Option<Vec<f64>> = runs
        .iter()
        .map(|r| {
            if r.divergence.is_none() {
                r.final_iiw
            } else {
                None
            }
        })
        .collect();
    values.is_some_and(|v| v.windows(2).all(|w| w[0] < w[1]))
}

/// Index of the smallest final IIW is neither the first nor the last.
pub fn interior_minimum(runs: &[&RunSummary]) -> bool {
    let values: Option<Vec<f64>> = runs
        .iter()
        .map(|r| {
            if r.divergence.is_none() {
                r.final_iiw
            } else {
                None
            }
        })
        .collect();
    let Some(values) = values else {
        return false;
    };
    let argmin = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i);
    matches!(argmin, Some(i) if i > 0 && i + 1 < values.len())
}

/// Cells sorted by their axis value, with the per-seed summaries.
fn along_axis<'a>(
    cells: &[Cell],
    runs: &'a [Vec<RunSummary>],
    seed_idx: usize,
) -> Vec<&'a RunSummary> {
    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_by(|&a, &b| {
        let key = |i: usize| cells[i].axis_value.unwrap_or(f64::NAN);
        key(a).total_cmp(&key(b))
    });
    order.iter().map(|&i| &runs[i][seed_idx]).collect()
}

fn checks(
    kind: ExperimentKind,
    cells: &[Cell],
    runs: &[Vec<RunSummary>],
    seeds: usize,
) -> Vec<Check> {
    let mut out = Vec::new();
    match kind {
        ExperimentKind::Track
        | ExperimentKind::SweepActivation
        | ExperimentKind::SweepDepth
        | ExperimentKind::SweepWidth => {
            for (cell, rs) in cells.iter().zip(runs) {
                let per_seed: Vec<bool> = rs.iter().map(shows_phase_transition).collect();
                out.push(Check::new(
                    format!("phase_transition/{}", cell.name),
                    "IIW peaks before half of training and ends at <= 0.7 x peak".into(),
                    &per_seed,
                ));
            }
        }
        ExperimentKind::SweepNoise => {
            let per_seed: Vec<bool> = (0..seeds)
                .map(|s| strictly_increasing_iiw(&along_axis(cells, runs, s)))
                .collect();
            out.push(Check::new(
                "iiw_increases_with_noise".into(),
                "final IIW strictly increasing in the noise ratio".into(),
                &per_seed,
            ));
        }
        ExperimentKind::SweepBatch => {
            let per_seed: Vec<bool> = (0..seeds)
                .map(|s| interior_minimum(&along_axis(cells, runs, s)))
                .collect();
            out.push(Check::new(
                "interior_batch_minimum".into(),
                "argmin of final IIW over batch sizes is not an end of the grid".into(),
                &per_seed,
            ));
        }
        ExperimentKind::CompareRegularizers => {
            if let Some(p) = cells.iter().position(|c| c.name == Method::Pib.name()) {
                for (i, cell) in cells.iter().enumerate().filter(|&(i, _)| i != p) {
                    let per_seed: Vec<bool> = (0..seeds)
                        .map(|s| {
                            let (a, b) = (&runs[p][s], &runs[i][s]);
                            a.divergence.is_none() && a.headline_test_acc() >= b.headline_test_acc()
                        })
                        .collect();
                    out.push(Check::new(
                        format!("pib_at_least_{}", cell.name),
                        format!("PIB posterior test accuracy >= {} test accuracy", cell.name),
                        &per_seed,
                    ));
                }
            }
        }
        ExperimentKind::PibTrain | ExperimentKind::OracleValidate => {}
    }
    out
}

/// Runs every cell for every seed. Artifacts go under `out` when given.
/// A diverged run does not stop the others; the first divergence is
/// returned as an error after the aggregate has been written.
pub fn run_experiment(config: &ExperimentConfig, out: Option<&Path>) -> Result<ExperimentResult> {
    config.validate()?;
    let kind = config
        .experiment
        .ok_or_else(|| HarnessError::config("no experiment kind given"))?;
    let grid = cells(config)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let stored = ExperimentConfig {
            out: None,
            ..config.clone()
        };
        write_json(&dir.join("config.json"), &stored)?;
    }
    let mut runs = Vec::with_capacity(grid.len());
    let mut first_divergence = None;
    for cell in &grid {
        let mut per_seed = Vec::with_capacity(config.seeds.len());
        for &seed in &config.seeds {
            let data = prepare(&cell.dataset, seed)?;
            let label = Label {
                experiment: kind.name(),
                cell: &cell.name,
                seed,
            };
            let dir = out.map(|o| cell_dir(o, &cell.name, seed));
            let result = match &cell.job {
                Job::Track(t) => run_track(&label, &cell.network, t, &data, dir.as_deref())?,
                Job::Pib(s) => run_pib(&label, &cell.network, s, &data, dir.as_deref())?,
            };
            if let (Some(d), None) = (&result.summary.divergence, &first_divergence) {
                first_divergence = Some((d.clone(), dir.clone()));
            }
            per_seed.push(result.summary);
        }
        runs.push(per_seed);
    }
    let aggregate = Aggregate {
        experiment: kind.name().into(),
        seeds: config.seeds.clone(),
        cells: grid
            .iter()
            .zip(&runs)
            .map(|(c, r)| aggregate_cell(c, r))
            .collect(),
        checks: checks(kind, &grid, &runs, config.seeds.len()),
    };
    if let Some(dir) = out {
        write_json(&dir.join("aggregate.json"), &aggregate)?;
    }
    if let Some((d, dir)) = first_divergence {
        return Err(HarnessError::Diverged {
            iter: d.iter,
            reason: d.reason,
            dir: dir.map_or_else(|| "-".into(), |p| p.display().to_string()),
        });
    }
    Ok(ExperimentResult { aggregate, runs })
}
