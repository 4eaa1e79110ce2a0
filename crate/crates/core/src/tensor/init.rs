//! Kaiming (He) normal initialization, fan-in mode with rectifier gain.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Real, Tensor, TensorError};

/// Samples `N(0, 2 / fan_in)`. The same seed always yields the same tensor.
pub fn kaiming_normal<T: Real>(shape: &[usize], fan_in: usize, seed: u64) -> Result<Tensor<T>, TensorError> {
    if fan_in == 0 {
        return Err(TensorError::InvalidArgument {
            op: "kaiming_normal",
            detail: "fan_in must be at least 1".into(),
        });
    }
    let numel: usize = shape.iter().product();
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite positive std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..numel).map(|_| T::lit(normal.sample(&mut rng))).collect();
    Tensor::new(shape, data)
}
