use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use super::{to_u8, ImageBuffer};
use crate::error::{Error, Result};
use crate::rng::seeded;

/// With probability `probability`, adds independent N(mean, std²) noise to
/// every sample and clamps to [0,255]. Otherwise returns the patch unchanged.
pub fn gaussian_noise(patch: &ImageBuffer, mean: f64, std: f64, probability: f64, seed: u64) -> Result<ImageBuffer> {
    if !(std >= 0.0) || !std.is_finite() || !mean.is_finite() {
        return Err(Error::InvalidArgument(format!("noise mean {mean} / std {std}")));
    }
    if !(0.0..=1.0).contains(&probability) {
        return Err(Error::InvalidArgument(format!("noise probability {probability} outside [0,1]")));
    }
    let mut rng = seeded(seed);
    if !rng.random_bool(probability) || (std == 0.0 && mean == 0.0) {
        return Ok(patch.clone());
    }
    let normal = Normal::new(mean, std).expect("validated parameters");
    let data = patch.data().iter().map(|&v| to_u8(v as f64 + normal.sample(&mut rng))).collect();
    ImageBuffer::from_raw(patch.width(), patch.height(), data)
}
