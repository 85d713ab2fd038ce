//! Single training runs and their on-disk artifacts.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use pib_core::iiw::{evaluate, track_iiw_with_observer, Divergence, TrackConfig};
use pib_core::metrics::{MetricsRecord, MetricsWriter};
use pib_core::nn::NetworkSpec;
use pib_core::pib::{
    posterior_accuracy, run_pib_training_with_observer, write_checkpoint, SgldConfig,
};
use pib_core::rng::substream;
use serde::{Deserialize, Serialize};

use crate::config::NetworkConfig;
use crate::data::{streams, Prepared};
use crate::error::{HarnessError, Result};

/// Per-seed outcome written as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub experiment: String,
    pub cell: String,
    pub seed: u64,
    /// Iterations completed after the prior-mean warmup.
    pub iterations: usize,
    /// NaN (written as `null`) when a run diverged before its first log.
    #[serde(deserialize_with = "nan_if_null")]
    pub final_train_acc: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub final_test_acc: f64,
    /// `final_train_acc - final_test_acc`.
    #[serde(deserialize_with = "nan_if_null")]
    pub gap: f64,
    pub final_iiw: Option<f64>,
    pub peak_iiw: Option<f64>,
    pub peak_iter: Option<usize>,
    /// `peak_iter / iterations`.
    pub peak_fraction: Option<f64>,
    /// The largest IIW reading is the last one.
    pub no_compression: bool,
    /// Accuracies of the posterior-averaged prediction (SGLD runs only).
    pub posterior_train_acc: Option<f64>,
    pub posterior_test_acc: Option<f64>,
    pub posterior_samples: Option<usize>,
    pub log_det_prior_cov: Option<f64>,
    pub divergence: Option<Divergence>,
}

fn nan_if_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

impl RunSummary {
    /// Accuracy used when methods are compared: the posterior ensemble when
    /// there is one, the final weights otherwise.
    pub fn headline_test_acc(&self) -> f64 {
        self.posterior_test_acc.unwrap_or(self.final_test_acc)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub metrics: Vec<MetricsRecord>,
    pub params: Vec<f64>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

struct Sink {
    writer: Option<(MetricsWriter<BufWriter<File>>, std::path::PathBuf)>,
}

impl Sink {
    fn open(dir: Option<&Path>, sampler: bool) -> Result<Self> {
        let writer = match dir {
            Some(d) => {
                create_dir(d)?;
                let path = d.join("metrics.csv");
                let file = File::create(&path).map_err(|e| HarnessError::io(&path, e))?;
                let w = MetricsWriter::new(BufWriter::new(file), sampler)
                    .map_err(|e| HarnessError::io(&path, e))?;
                Some((w, path))
            }
            None => None,
        };
        Ok(Self { writer })
    }

    fn write(&mut self, record: &MetricsRecord) -> pib_core::Result<()> {
        if let Some((w, _)) = &mut self.writer {
            w.write(record)?;
        }
        Ok(())
    }
}

fn finish(
    dir: Option<&Path>,
    summary: &RunSummary,
    params: &[f64],
    started: Instant,
) -> Result<()> {
    if let Some(d) = dir {
        write_json(&d.join("summary.json"), summary)?;
        let ckpt = d.join("checkpoint.bin");
        let file = File::create(&ckpt).map_err(|e| HarnessError::io(&ckpt, e))?;
        write_checkpoint(BufWriter::new(file), params, summary.iterations as u64)?;
        let timing = d.join("timing.txt");
        std::fs::write(&timing, format!("{:.3}\n", started.elapsed().as_secs_f64()))
            .map_err(|e| HarnessError::io(&timing, e))?;
    }
    Ok(())
}

pub struct Label<'a> {
    pub experiment: &'a str,
    pub cell: &'a str,
    pub seed: u64,
}

fn summarize(
    label: &Label<'_>,
    metrics: &[MetricsRecord],
    fallback: (f64, f64),
    iterations: usize,
    divergence: Option<Divergence>,
) -> RunSummary {
    let (train_acc, test_acc) = metrics
        .last()
        .map(|r| (r.train_acc, r.test_acc.unwrap_or(f64::NAN)))
        .unwrap_or(fallback);
    let readings: Vec<(usize, f64)> = metrics
        .iter()
        .filter_map(|r| r.iiw.map(|v| (r.iter, v)))
        .collect();
    let peak =
        readings
            .iter()
            .copied()
            .fold(None, |best: Option<(usize, f64)>, (i, v)| match best {
                Some((_, b)) if b >= v => best,
                _ => Some((i, v)),
            });
    let final_iiw = readings.last().map(|r| r.1);
    RunSummary {
        experiment: label.experiment.to_string(),
        cell: label.cell.to_string(),
        seed: label.seed,
        iterations,
        final_train_acc: train_acc,
        final_test_acc: test_acc,
        gap: train_acc - test_acc,
        final_iiw,
        peak_iiw: peak.map(|p| p.1),
        peak_iter: peak.map(|p| p.0),
        peak_fraction: peak.map(|p| p.0 as f64 / iterations.max(1) as f64),
        no_compression: matches!((peak, readings.last()), (Some(p), Some(l)) if p.0 == l.0),
        posterior_train_acc: None,
        posterior_test_acc: None,
        posterior_samples: None,
        log_det_prior_cov: None,
        divergence,
    }
}

/// Accuracies of the final weights, used only when no metrics row exists.
/// Weights that cannot be evaluated give NaN.
fn fallback(
    spec: &NetworkSpec,
    params: ndarray::ArrayView1<'_, f64>,
    data: &Prepared,
    metrics: &[MetricsRecord],
) -> (f64, f64) {
    if !metrics.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    match evaluate(spec, params, &data.train, Some(&data.test)) {
        Ok(e) => (e.train_acc, e.test_acc.unwrap_or(f64::NAN)),
        Err(_) => (f64::NAN, f64::NAN),
    }
}

fn initial_params(spec: &NetworkSpec, seed: u64) -> ndarray::Array1<f64> {
    spec.init_params(&mut substream(seed, streams::INIT))
}

/// SGD/Adam training with IIW tracking.
pub fn run_track(
    label: &Label<'_>,
    network: &NetworkConfig,
    track: &TrackConfig,
    data: &Prepared,
    dir: Option<&Path>,
) -> Result<RunOutput> {
    let started = Instant::now();
    let spec = network.spec(data.train.dim(), data.train.num_classes())?;
    let init = initial_params(&spec, label.seed);
    let mut sink = Sink::open(dir, false)?;
    let mut rng = substream(label.seed, streams::TRAIN);
    let out = track_iiw_with_observer(
        &spec,
        init,
        &data.train,
        Some(&data.test),
        track,
        &mut rng,
        &mut |r| sink.write(r),
    )?;
    let done = out.metrics.last().map_or(0, |r| r.iter);
    let summary = summarize(
        label,
        &out.metrics,
        fallback(&spec, out.params.view(), data, &out.metrics),
        done,
        out.divergence,
    );
    let params = out.params.to_vec();
    finish(dir, &summary, &params, started)?;
    Ok(RunOutput {
        summary,
        metrics: out.metrics,
        params,
    })
}

/// SGLD sampling of the PIB posterior.
pub fn run_pib(
    label: &Label<'_>,
    network: &NetworkConfig,
    sgld: &SgldConfig,
    data: &Prepared,
    dir: Option<&Path>,
) -> Result<RunOutput> {
    let started = Instant::now();
    let spec = network.spec(data.train.dim(), data.train.num_classes())?;
    let init = initial_params(&spec, label.seed);
    let mut sink = Sink::open(dir, true)?;
    let mut rng = substream(label.seed, streams::TRAIN);
    let out = run_pib_training_with_observer(
        &spec,
        init,
        &data.train,
        Some(&data.test),
        sgld,
        &mut rng,
        &mut |r| sink.write(r),
    )?;
    let mut summary = summarize(
        label,
        &out.metrics,
        fallback(&spec, out.params.view(), data, &out.metrics),
        out.last_iter,
        out.divergence,
    );
    if !out.samples.is_empty() {
        summary.posterior_train_acc = posterior_accuracy(&out.samples, &spec, &data.train).ok();
        summary.posterior_test_acc = posterior_accuracy(&out.samples, &spec, &data.test).ok();
    }
    summary.posterior_samples = Some(out.samples.len());
    summary.log_det_prior_cov = out.log_det;
    let params = out.params.to_vec();
    finish(dir, &summary, &params, started)?;
    Ok(RunOutput {
        summary,
        metrics: out.metrics,
        params,
    })
}
