//! Tone-mapped loss, metrics, augmentation, the training loop and evaluation.

pub mod augment;
mod eval;
pub mod metrics;
mod tonemap;
mod trainer;

use std::path::PathBuf;

use thiserror::Error;

use crate::imageio::ImageError;
use crate::model::ModelError;
use crate::tensor::TensorError;

pub use eval::{evaluate, evaluate_predictions, EvalReport, SampleMetrics};
pub use metrics::{psnr, ssim, Domain, MetricError, PSNR_CAP_DB};
pub use tonemap::{mu_law, mu_law_derivative, tonemapped_l1, tonemapped_l1_value, DEFAULT_MU};
pub use trainer::{
    read_history, train, train_with, write_history, EpochRecord, TrainConfig, TrainOutcome, FINAL_CHECKPOINT,
    HISTORY_FILE,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sample {sample} is {width}x{height}, smaller than the {crop}x{crop} crop")]
    ImageTooSmall {
        sample: String,
        width: usize,
        height: usize,
        crop: usize,
    },
    #[error("samples without ground truth: {}", .0.join(", "))]
    MissingGroundTruth(Vec<String>),
    #[error("non-finite loss at epoch {epoch}; diagnostic checkpoint: {}", checkpoint.as_ref().map_or("not written".into(), |p| p.display().to_string()))]
    NonFiniteLoss { epoch: usize, checkpoint: Option<PathBuf> },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
