use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::augment::{crop_with, draw, Dihedral};
use super::{tonemapped_l1, TrainError, DEFAULT_MU};
use crate::imageio::ExposureStack;
use crate::model::{
    build_network, check_fingerprint, hdr_to_tensor, init_weights, preprocess, save_checkpoint, HdrFeatConfig,
    DEFAULT_GAMMA,
};
use crate::tensor::optim::{adam_step, AdamConfig};
use crate::tensor::{Graph, WeightStore};

pub const HISTORY_FILE: &str = "loss_history.tsv";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";
const DIAGNOSTIC_CHECKPOINT: &str = "diagnostic.ckpt";

/// Optimization schedule and data settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_initial: f64,
    pub lr_reduced: f64,
    /// First epoch (0-based) trained at `lr_reduced`.
    pub lr_switch_epoch: usize,
    pub crop: usize,
    pub batch: usize,
    pub seed: u64,
    pub mu: f64,
    pub gamma: f64,
    /// Write a checkpoint every this many epochs; 0 writes only the final one.
    pub checkpoint_every: usize,
    /// Draw a random flip or rotation for every crop.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 16_000,
            lr_initial: 1e-4,
            lr_reduced: 1e-5,
            lr_switch_epoch: 12_000,
            crop: 256,
            batch: 8,
            seed: 0,
            mu: DEFAULT_MU,
            gamma: DEFAULT_GAMMA,
            checkpoint_every: 1000,
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.epochs == 0 || self.batch == 0 {
            return bad("epochs and batch must be positive".into());
        }
        if self.lr_switch_epoch > self.epochs {
            return bad(format!(
                "lr_switch_epoch {} exceeds epochs {}",
                self.lr_switch_epoch, self.epochs
            ));
        }
        if self.crop < 16 || !self.crop.is_multiple_of(2) {
            return bad(format!("crop must be even and at least 16, got {}", self.crop));
        }
        if self.mu.is_nan() || self.mu <= 0.0 || self.gamma.is_nan() || self.gamma <= 0.0 {
            return bad(format!(
                "mu and gamma must be positive, got {} and {}",
                self.mu, self.gamma
            ));
        }
        if !(self.lr_initial > 0.0 && self.lr_reduced > 0.0) {
            return bad("learning rates must be positive".into());
        }
        Ok(())
    }

    /// Learning rate used throughout 0-based `epoch`.
    ///
    /// ```
    /// let cfg = hdrfeat::train::TrainConfig::default();
    /// assert_eq!(cfg.lr_at(11_999), 1e-4);
    /// assert_eq!(cfg.lr_at(12_000), 1e-5);
    /// ```
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch < self.lr_switch_epoch {
            self.lr_initial
        } else {
            self.lr_reduced
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean loss over the epoch's crops.
    pub loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub weights: WeightStore<f32>,
    pub history: Vec<EpochRecord>,
}

/// Trains from a fresh initialization seeded by `tcfg.seed`.
pub fn train(
    dataset: &[ExposureStack],
    cfg: &HdrFeatConfig,
    tcfg: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome, TrainError> {
    let weights = init_weights(cfg, tcfg.seed)?;
    train_with(weights, dataset, cfg, tcfg, out_dir, |_| {})
}

/// Trains `weights` in place of a fresh initialization, reporting each epoch
/// to `observe`.
///
/// Epoch `e` draws one crop from every scene, visits the scenes in a
/// seeded shuffle and groups them into batches of `tcfg.batch` (the last
/// batch may be smaller). When `out_dir` is set, the loss history and
/// checkpoints are written there.
pub fn train_with(
    mut weights: WeightStore<f32>,
    dataset: &[ExposureStack],
    cfg: &HdrFeatConfig,
    tcfg: &TrainConfig,
    out_dir: Option<&Path>,
    mut observe: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome, TrainError> {
    tcfg.validate()?;
    check_fingerprint(cfg, &weights)?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let missing: Vec<String> = dataset
        .iter()
        .filter(|s| s.gt().is_none())
        .map(|s| s.sample_id().to_owned())
        .collect();
    if !missing.is_empty() {
        return Err(TrainError::MissingGroundTruth(missing));
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(tcfg.epochs);
    let mut step = weights.step();
    for epoch in 0..tcfg.epochs {
        let adam = AdamConfig::with_lr(tcfg.lr_at(epoch));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(tcfg.batch) {
            let mut crops = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let (offset, drawn) = draw(&dataset[i], tcfg.crop, &mut rng)?;
                let transform = if tcfg.augment { drawn } else { Dihedral::Identity };
                let crop = crop_with(&dataset[i], offset, tcfg.crop, transform).expect("offset drawn in bounds");
                crops.push(crop);
            }
            let loss = batch_step(&mut weights, cfg, tcfg, &crops)?;
            if !loss.is_finite() {
                let checkpoint = match out_dir {
                    Some(dir) => {
                        let path = dir.join(DIAGNOSTIC_CHECKPOINT);
                        save_checkpoint(&path, cfg, &weights)?;
                        Some(path)
                    }
                    None => None,
                };
                return Err(TrainError::NonFiniteLoss { epoch, checkpoint });
            }
            step += 1;
            adam_step(&mut weights, &adam, step)?;
            total += loss * chunk.len() as f64;
        }
        let record = EpochRecord {
            epoch,
            lr: adam.lr,
            loss: total / dataset.len() as f64,
        };
        observe(&record);
        history.push(record);
        if let Some(dir) = out_dir {
            if tcfg.checkpoint_every > 0 && (epoch + 1) % tcfg.checkpoint_every == 0 && epoch + 1 < tcfg.epochs {
                save_checkpoint(dir.join(format!("epoch_{:06}.ckpt", epoch + 1)), cfg, &weights)?;
            }
        }
    }
    if let Some(dir) = out_dir {
        save_checkpoint(dir.join(FINAL_CHECKPOINT), cfg, &weights)?;
        write_history(&dir.join(HISTORY_FILE), &history)?;
    }
    Ok(TrainOutcome { weights, history })
}

/// Forward and backward over one batch; leaves gradients on `weights`.
fn batch_step(
    weights: &mut WeightStore<f32>,
    cfg: &HdrFeatConfig,
    tcfg: &TrainConfig,
    crops: &[ExposureStack],
) -> Result<f64, TrainError> {
    let refs: Vec<&ExposureStack> = crops.iter().collect();
    let inputs = preprocess::<f32>(&refs, tcfg.gamma)?;
    let gts: Vec<_> = crops.iter().map(|c| c.gt().expect("checked before training")).collect();
    let target = hdr_to_tensor::<f32>(&gts)?;

    let mut g = Graph::new();
    let params = weights.bind(&mut g);
    let [a, b, c] = inputs.map(|t| g.constant(t));
    let trace = build_network(&mut g, cfg, &params, [a, b, c])?;
    let target = g.constant(target);
    let loss = tonemapped_l1(&mut g, trace.output, target, tcfg.mu)?;
    let value = g.value(loss).item().expect("scalar loss") as f64;
    if !value.is_finite() {
        return Ok(value);
    }
    g.backward(loss)?;
    weights.collect_grads(&g, &params);
    Ok(value)
}

fn io_error(path: &Path, source: std::io::Error) -> TrainError {
    TrainError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Writes one `epoch<TAB>lr<TAB>loss` line per epoch.
pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<(), TrainError> {
    let mut text = String::new();
    for r in history {
        let _ = writeln!(text, "{}\t{}\t{}", r.epoch, r.lr, r.loss);
    }
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

pub fn read_history(path: &Path) -> Result<Vec<EpochRecord>, TrainError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            let parsed = match f[..] {
                [e, lr, loss] => e
                    .parse()
                    .ok()
                    .zip(lr.parse().ok())
                    .zip(loss.parse().ok())
                    .map(|((epoch, lr), loss)| EpochRecord { epoch, lr, loss }),
                _ => None,
            };
            parsed.ok_or_else(|| TrainError::InvalidConfig(format!("{}: bad history line {}", path.display(), i + 1)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_switches_at_boundary() {
        let cfg = TrainConfig {
            epochs: 16,
            lr_switch_epoch: 12,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.lr_at(0), 1e-4);
        assert_eq!(cfg.lr_at(11), 1e-4);
        assert_eq!(cfg.lr_at(12), 1e-5);
        assert_eq!(cfg.lr_at(15), 1e-5);
    }

    #[test]
    fn validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig {
                crop: 15,
                ..Default::default()
            },
            TrainConfig {
                crop: 18 + 1,
                ..Default::default()
            },
            TrainConfig {
                mu: 0.0,
                ..Default::default()
            },
            TrainConfig {
                lr_switch_epoch: 20_000,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }
}
