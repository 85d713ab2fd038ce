//! Per-seed train/test sets.

use pib_core::data::{corrupt_labels, load_idx, subsample, synthetic_blobs, train_test_split};
use pib_core::rng::substream;
use pib_core::Dataset;

use crate::config::{DataSource, DatasetConfig};
use crate::error::{HarnessError, Result};

/// Random streams derived from a run seed.
pub mod streams {
    pub const DATA: u64 = 0;
    pub const NOISE: u64 = 1;
    pub const INIT: u64 = 2;
    pub const TRAIN: u64 = 3;
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
}

fn load_split(cfg: &DatasetConfig, prefix: &str) -> Result<Dataset> {
    let images = cfg.dir.join(format!("{prefix}-images-idx3-ubyte"));
    let labels = cfg.dir.join(format!("{prefix}-labels-idx1-ubyte"));
    for p in [&images, &labels] {
        if !p.exists() {
            return Err(HarnessError::config(format!(
                "missing IDX file {}",
                p.display()
            )));
        }
    }
    Ok(load_idx(&images, &labels)?)
}

/// Draws the training subset, the test subset and the label noise for `seed`.
/// Label noise touches the training labels only.
pub fn prepare(cfg: &DatasetConfig, seed: u64) -> Result<Prepared> {
    let mut rng = substream(seed, streams::DATA);
    let (train, test) = match cfg.source {
        DataSource::Mnist => {
            let train = load_split(cfg, "train")?;
            let test = load_split(cfg, "t10k")?;
            if cfg.train_size > train.len() || cfg.test_size > test.len() {
                return Err(HarnessError::config(format!(
                    "requested {} train / {} test samples but {} has {} / {}",
                    cfg.train_size,
                    cfg.test_size,
                    cfg.dir.display(),
                    train.len(),
                    test.len()
                )));
            }
            (
                subsample(&train, cfg.train_size, &mut rng)?,
                subsample(&test, cfg.test_size, &mut rng)?,
            )
        }
        DataSource::Blobs => {
            let all = synthetic_blobs(
                cfg.train_size + cfg.test_size,
                cfg.blob_dim,
                cfg.blob_classes,
                cfg.blob_separation,
                &mut rng,
            )?;
            train_test_split(&all, cfg.train_size, cfg.test_size, &mut rng)?
        }
    };
    let train = if cfg.noise_ratio > 0.0 {
        corrupt_labels(
            &train,
            cfg.noise_ratio,
            &mut substream(seed, streams::NOISE),
        )?
    } else {
        train
    };
    Ok(Prepared { train, test })
}
