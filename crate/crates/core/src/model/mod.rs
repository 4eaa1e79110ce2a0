//! The reconstruction network: three exposures in, one radiance map out.
//!
//! Each exposure is linearized and stacked with its LDR values, passed
//! through a shared stack of same-resolution feature levels of growing width,
//! and the short and long level-1 features are modulated by residual
//! attention guided by the medium exposure. Levels are merged top-down
//! through 3x3 bottlenecks, and the merged map is refined by residual
//! feature distillation blocks with a long skip from the medium features.

mod checkpoint;
mod config;
pub mod network;
mod params;
mod preprocess;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::imageio::{ExposureStack, HdrImage};
use crate::tensor::{Graph, Real, TensorError, WeightStore};

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_for, save_checkpoint, Checkpoint,
};
pub use config::{AttentionMode, HdrFeatConfig, CHANNEL_REDUCTION, LEAKY_SLOPE};
pub use network::{build_network, AttentionTrace, ForwardTrace};
pub use params::{attention_prefix, extractor_prefix, init_weights, param_count, param_specs, ParamCount, ParamSpec};
pub use preprocess::{hdr_to_tensor, preprocess, tensor_to_hdr, DEFAULT_GAMMA};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("weights were built for config {found}, active config is {expected}")]
    Fingerprint { expected: String, found: String },
    #[error("network inputs must be N x 6 x H x W and agree, got {0:?}")]
    InputShape(Vec<usize>),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("{path}: {detail}")]
    Checkpoint { path: PathBuf, detail: String },
    #[error("{path}: missing checkpoint")]
    MissingCheckpoint { path: PathBuf },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ModelError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            return Self::MissingCheckpoint { path: path.to_owned() };
        }
        Self::Io {
            path: path.to_owned(),
            source,
        }
    }
}

/// Checks that `weights` were built for `cfg`.
pub fn check_fingerprint<T: Real>(cfg: &HdrFeatConfig, weights: &WeightStore<T>) -> Result<(), ModelError> {
    let expected = cfg.fingerprint();
    if weights.fingerprint() != expected {
        return Err(ModelError::Fingerprint {
            expected,
            found: weights.fingerprint().to_owned(),
        });
    }
    Ok(())
}

/// Full-image reconstruction of one stack.
pub fn forward(
    stack: &ExposureStack,
    cfg: &HdrFeatConfig,
    weights: &WeightStore<f32>,
    gamma: f64,
) -> Result<HdrImage, ModelError> {
    check_fingerprint(cfg, weights)?;
    let inputs = preprocess::<f32>(&[stack], gamma)?;
    let mut g = Graph::new();
    let params = weights.bind(&mut g);
    let [a, b, c] = inputs.map(|t| g.constant(t));
    let trace = build_network(&mut g, cfg, &params, [a, b, c])?;
    let out = g.value(trace.output);
    if let Some(i) = out.first_non_finite() {
        return Err(ModelError::NonFinite(format!("network output at index {i}")));
    }
    tensor_to_hdr(out, 0)
}
