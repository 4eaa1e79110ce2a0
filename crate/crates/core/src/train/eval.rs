use std::fmt::Write as _;
use std::time::{Duration, Instant};

use super::metrics::{psnr, ssim, Domain};
use super::TrainError;
use crate::imageio::{ExposureStack, HdrImage};
use crate::model::{forward, HdrFeatConfig};
use crate::tensor::WeightStore;

#[derive(Clone, Debug, PartialEq)]
pub struct SampleMetrics {
    pub sample_id: String,
    pub psnr_t: f64,
    pub psnr_l: f64,
    pub ssim_t: f64,
    pub ssim_l: f64,
}

impl SampleMetrics {
    pub fn compute(sample_id: &str, pred: &HdrImage, gt: &HdrImage, mu: f64) -> Result<Self, TrainError> {
        let tm = Domain::ToneMapped { mu };
        Ok(Self {
            sample_id: sample_id.to_owned(),
            psnr_t: psnr(pred, gt, tm)?,
            psnr_l: psnr(pred, gt, Domain::Linear)?,
            ssim_t: ssim(pred, gt, tm)?,
            ssim_l: ssim(pred, gt, Domain::Linear)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub fingerprint: String,
    pub samples: Vec<SampleMetrics>,
    pub mean: SampleMetrics,
    /// Wall time of the forwards. Kept out of [`to_text`](Self::to_text)
    /// so that reports of identical runs are byte-identical.
    pub runtime: Duration,
}

impl EvalReport {
    pub fn from_samples(fingerprint: &str, samples: Vec<SampleMetrics>, runtime: Duration) -> Self {
        let n = samples.len().max(1) as f64;
        let avg = |f: fn(&SampleMetrics) -> f64| samples.iter().map(f).sum::<f64>() / n;
        let mean = SampleMetrics {
            sample_id: "mean".into(),
            psnr_t: avg(|s| s.psnr_t),
            psnr_l: avg(|s| s.psnr_l),
            ssim_t: avg(|s| s.ssim_t),
            ssim_l: avg(|s| s.ssim_l),
        };
        Self {
            fingerprint: fingerprint.to_owned(),
            samples,
            mean,
            runtime,
        }
    }

    /// Structured text with one block per sample and a trailing mean block.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "fingerprint = {}", self.fingerprint);
        let _ = writeln!(out, "samples = {}", self.samples.len());
        let mut block = |header: String, m: &SampleMetrics| {
            let _ = writeln!(out, "\n[{header}]");
            let _ = writeln!(out, "psnr_t = {:.6}", m.psnr_t);
            let _ = writeln!(out, "psnr_l = {:.6}", m.psnr_l);
            let _ = writeln!(out, "ssim_t = {:.8}", m.ssim_t);
            let _ = writeln!(out, "ssim_l = {:.8}", m.ssim_l);
        };
        for s in &self.samples {
            block(format!("sample {}", s.sample_id), s);
        }
        block("mean".into(), &self.mean);
        out
    }
}

/// Metrics for precomputed predictions, `(sample_id, prediction, truth)`.
pub fn evaluate_predictions(
    fingerprint: &str,
    pairs: &[(&str, &HdrImage, &HdrImage)],
    mu: f64,
) -> Result<EvalReport, TrainError> {
    let samples = pairs
        .iter()
        .map(|(id, pred, gt)| SampleMetrics::compute(id, pred, gt, mu))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport::from_samples(fingerprint, samples, Duration::ZERO))
}

/// Full-image forward and all four metrics for every sample.
pub fn evaluate(
    dataset: &[ExposureStack],
    weights: &WeightStore<f32>,
    cfg: &HdrFeatConfig,
    mu: f64,
    gamma: f64,
) -> Result<EvalReport, TrainError> {
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
    let start = Instant::now();
    let mut samples = Vec::with_capacity(dataset.len());
    for stack in dataset {
        let pred = forward(stack, cfg, weights, gamma)?;
        let gt = stack.gt().expect("checked above");
        samples.push(SampleMetrics::compute(stack.sample_id(), &pred, gt, mu)?);
    }
    Ok(EvalReport::from_samples(&cfg.fingerprint(), samples, start.elapsed()))
}
