//! Teacher–student feature distillation at toy scale.
//!
//! A frozen random teacher and a trainable student share the same
//! four-stage convolutional architecture. The student is fitted to the
//! teacher on normal images through the channel-cosine distillation loss;
//! on anomalous images the per-location disagreement becomes an attention
//! map that gates the student features fed to the segmentation head.

mod gradcheck;
mod losses;
mod network;
mod train;

pub use gradcheck::{grad_check, sample_coords};
pub use losses::{
    bce_loss, bce_loss_grad, csam, csam_pyramid, db_loss, db_loss_with_grad, dice_loss, dice_loss_grad, kd_loss,
    kd_loss_with_grad, total_loss, CsamOutput, Detached, BCE_EPS, DICE_SMOOTH,
};
pub use network::{upsample, BackboneCache, ConvStage, HeadCache, ToyBackbone, ToyHead, DEFAULT_CHANNELS,
    STUDENT_INIT_GAIN,
};
pub use train::{
    db_loss_attended, db_loss_plain, kd_loss_and_grad, mean_kd_loss, total_loss_and_grads, train_student, SgdConfig,
    TotalLossGrads,
};

use rand::Rng as _;

use crate::error::Result;
use crate::imgproc::{ImageBuffer, MaskBuffer};
use crate::ndtensor::Tensor;
use crate::rng::seeded;
use crate::scalar::Real;

/// `[3,H,W]` tensor with samples scaled to [0,1].
pub fn image_to_tensor<T: Real>(image: &ImageBuffer) -> Tensor<T> {
    let (w, h) = image.dims();
    let plane = w * h;
    let inv = T::lit(1.0 / 255.0);
    Tensor::from_fn(&[3, h, w], |i| {
        let (c, p) = (i / plane, i % plane);
        T::from_u8(image.data()[p * 3 + c]).expect("u8 fits") * inv
    })
}

/// Flat-coloured images with a faint oriented stripe texture.
pub fn toy_normals(count: usize, size: usize, seed: u64) -> Vec<ImageBuffer> {
    let mut rng = seeded(seed);
    (0..count)
        .map(|_| {
            let base: [f64; 3] = [rng.random_range(60.0..200.0), rng.random_range(60.0..200.0), rng.random_range(60.0..200.0)];
            let angle = rng.random_range(0.0..std::f64::consts::PI);
            let period = rng.random_range(6.0..14.0);
            let (dx, dy) = (angle.cos(), angle.sin());
            ImageBuffer::from_fn(size, size, |x, y| {
                let phase = (x as f64 * dx + y as f64 * dy) / period * std::f64::consts::TAU;
                let t = 6.0 * phase.sin();
                base.map(|b| (b + t).round().clamp(0.0, 255.0) as u8)
            })
        })
        .collect()
}

/// Per-pixel anomaly attention at input resolution: the mean over stages
/// of the bilinearly upsampled `(1 - cos) / 2` maps.
pub fn attention_map<T: Real>(teacher: &ToyBackbone<T>, student: &ToyBackbone<T>, image: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, h, w) = image.chw()?;
    let (_, maps) = csam_pyramid(&teacher.forward(image)?, &student.forward(image)?)?;
    let mut acc = vec![T::zero(); h * w];
    let inv = T::one() / T::from_usize(maps.len()).expect("fits");
    for m in &maps {
        let (mh, mw) = (m.shape()[0], m.shape()[1]);
        for (a, u) in acc.iter_mut().zip(upsample(m.data(), (mh, mw), (h, w))) {
            *a = *a + u * inv;
        }
    }
    Tensor::from_vec(&[h, w], acc)
}

/// Mean of `map` over set and unset pixels of `mask`.
pub fn inside_outside_means<T: Real>(map: &Tensor<T>, mask: &MaskBuffer) -> (T, T) {
    let (mut si, mut ni, mut so, mut no) = (T::zero(), 0usize, T::zero(), 0usize);
    for (&v, &m) in map.data().iter().zip(mask.data()) {
        if m != 0 {
            si = si + v;
            ni += 1;
        } else {
            so = so + v;
            no += 1;
        }
    }
    let mean = |s: T, n: usize| if n == 0 { T::zero() } else { s / T::from_usize(n).expect("fits") };
    (mean(si, ni), mean(so, no))
}
