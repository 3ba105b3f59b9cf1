use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::losses::{csam_pyramid, db_loss_with_grad, kd_loss, kd_loss_with_grad, total_loss};
use super::network::{ToyBackbone, ToyHead};
use crate::error::{Error, Result};
use crate::imgproc::MaskBuffer;
use crate::ndtensor::{FeaturePyramid, Tensor};
use crate::rng::seeded;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig { learning_rate: 0.001, steps: 200, batch_size: 8 }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Distillation loss on one image and its gradient for the student.
pub fn kd_loss_and_grad<T: Real>(
    teacher_pyramid: &FeaturePyramid<T>,
    student: &ToyBackbone<T>,
    image: &Tensor<T>,
) -> Result<(T, ToyBackbone<T>)> {
    let cache = student.forward_cached(image)?;
    let (loss, stage_grads) = kd_loss_with_grad(teacher_pyramid, &cache.pyramid())?;
    Ok((loss, student.backward(&cache, &stage_grads)?))
}

/// Mean distillation loss over a set of images.
pub fn mean_kd_loss<T: Real>(teacher: &ToyBackbone<T>, student: &ToyBackbone<T>, images: &[Tensor<T>]) -> Result<T> {
    if images.is_empty() {
        return Err(Error::Empty("image set"));
    }
    let mut total = T::zero();
    for img in images {
        total = total + kd_loss(&teacher.forward(img)?, &student.forward(img)?)?;
    }
    Ok(total / T::from_usize(images.len()).expect("fits"))
}

/// Plain SGD on the distillation loss over normal images. The teacher is
/// only read. Returns the trained student and the batch loss recorded
/// before each update.
pub fn train_student<T: Real>(
    teacher: &ToyBackbone<T>,
    student: &ToyBackbone<T>,
    normals: &[Tensor<T>],
    cfg: &SgdConfig,
    seed: u64,
) -> Result<(ToyBackbone<T>, Vec<T>)> {
    cfg.validate()?;
    if normals.is_empty() {
        return Err(Error::Empty("normal images"));
    }
    if !teacher.same_architecture(student) {
        return Err(Error::DimensionMismatch("teacher and student architectures differ".into()));
    }
    let targets: Vec<FeaturePyramid<T>> = normals.iter().map(|n| teacher.forward(n)).collect::<Result<_>>()?;
    let mut student = student.clone();
    let mut rng = seeded(seed);
    let mut order: Vec<usize> = (0..normals.len()).collect();
    let lr = T::lit(cfg.learning_rate);
    let mut trace = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let batch: Vec<usize> = if cfg.batch_size >= normals.len() {
            order.clone()
        } else {
            order.shuffle(&mut rng);
            order[..cfg.batch_size].to_vec()
        };
        let inv = T::one() / T::from_usize(batch.len()).expect("fits");
        let mut grad = student.zeros_like();
        let mut loss = T::zero();
        for &i in &batch {
            let (l, g) = kd_loss_and_grad(&targets[i], &student, &normals[i])?;
            loss = loss + l * inv;
            grad.add_scaled(&g, inv);
        }
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        trace.push(loss);
        student.add_scaled(&grad, -lr);
    }
    Ok((student, trace))
}

/// Segmentation loss of the distillation-augmented model on one anomalous
/// image. The head reads the attention-gated, detached student features,
/// so only head gradients exist.
pub fn db_loss_attended<T: Real>(
    teacher: &ToyBackbone<T>,
    student: &ToyBackbone<T>,
    head: &ToyHead<T>,
    image: &Tensor<T>,
    target: &MaskBuffer,
) -> Result<(T, ToyHead<T>)> {
    let (_, h, w) = image.chw()?;
    let (attended, _) = csam_pyramid(&teacher.forward(image)?, &student.forward(image)?)?;
    let cache = head.forward(attended.value(), (h, w))?;
    let (loss, d_pred) = db_loss_with_grad(cache.prediction(), target)?;
    let (head_grad, _feature_grads) = head.backward(&cache, &d_pred)?;
    Ok((loss, head_grad))
}

/// Segmentation loss of the basic model (head directly on the backbone)
/// with gradients for both head and backbone.
pub fn db_loss_plain<T: Real>(
    backbone: &ToyBackbone<T>,
    head: &ToyHead<T>,
    image: &Tensor<T>,
    target: &MaskBuffer,
) -> Result<(T, ToyHead<T>, ToyBackbone<T>)> {
    let (_, h, w) = image.chw()?;
    let bcache = backbone.forward_cached(image)?;
    let hcache = head.forward(&bcache.pyramid(), (h, w))?;
    let (loss, d_pred) = db_loss_with_grad(hcache.prediction(), target)?;
    let (head_grad, feature_grads) = head.backward(&hcache, &d_pred)?;
    let backbone_grad = backbone.backward(&bcache, &feature_grads)?;
    Ok((loss, head_grad, backbone_grad))
}

/// Gradients of the total loss for one training pair.
#[derive(Debug, Clone)]
pub struct TotalLossGrads<T> {
    pub loss: T,
    pub db: T,
    pub kd: T,
    pub student: ToyBackbone<T>,
    pub head: ToyHead<T>,
}

/// Total loss: segmentation loss on an anomalous image plus distillation
/// loss on a normal image. The student receives gradient only from the
/// distillation term.
pub fn total_loss_and_grads<T: Real>(
    teacher: &ToyBackbone<T>,
    student: &ToyBackbone<T>,
    head: &ToyHead<T>,
    normal: &Tensor<T>,
    anomalous: &Tensor<T>,
    target: &MaskBuffer,
) -> Result<TotalLossGrads<T>> {
    let (kd, student_grad) = kd_loss_and_grad(&teacher.forward(normal)?, student, normal)?;
    let (db, head_grad) = db_loss_attended(teacher, student, head, anomalous, target)?;
    Ok(TotalLossGrads { loss: total_loss(db, kd), db, kd, student: student_grad, head: head_grad })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn images(n: usize, size: usize) -> Vec<Tensor<f64>> {
        (0..n)
            .map(|k| Tensor::from_fn(&[3, size, size], |i| 0.3 + 0.2 * ((i + 7 * k) as f64 * 0.05).sin()))
            .collect()
    }

    #[test]
    fn zero_steps_returns_student_unchanged() {
        let t = ToyBackbone::<f64>::default_random(1);
        let s = ToyBackbone::<f64>::default_random(2);
        let cfg = SgdConfig { steps: 0, ..Default::default() };
        let (out, trace) = train_student(&t, &s, &images(2, 32), &cfg, 0).unwrap();
        assert_eq!(out, s);
        assert!(trace.is_empty());
    }

    #[test]
    fn student_equal_teacher_is_stationary() {
        let t = ToyBackbone::<f64>::default_random(1);
        let cfg = SgdConfig { steps: 3, ..Default::default() };
        let (out, trace) = train_student(&t, &t, &images(2, 32), &cfg, 0).unwrap();
        assert!(trace.iter().all(|&l| l.abs() < 1e-12));
        let drift = out.params().iter().zip(t.params()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(drift < 1e-12, "{drift}");
    }

    #[test]
    fn teacher_untouched_and_loss_falls() {
        let t = ToyBackbone::<f64>::default_random(1);
        let snapshot: Vec<u64> = t.params().iter().map(|v| v.to_bits()).collect();
        let s = ToyBackbone::<f64>::default_random(2);
        let cfg = SgdConfig { steps: 20, learning_rate: 0.01, batch_size: 2 };
        let (_, trace) = train_student(&t, &s, &images(4, 32), &cfg, 3).unwrap();
        assert!(trace.last().unwrap() < &trace[0]);
        assert_eq!(snapshot, t.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn bad_inputs_rejected() {
        let t = ToyBackbone::<f64>::default_random(1);
        let other = ToyBackbone::<f64>::random(3, &[8, 16, 32], 2);
        assert!(train_student(&t, &other, &images(1, 32), &SgdConfig::default(), 0).is_err());
        assert!(train_student(&t, &t, &[], &SgdConfig::default(), 0).is_err());
        let cfg = SgdConfig { learning_rate: 0.0, ..Default::default() };
        assert!(train_student(&t, &t, &images(1, 32), &cfg, 0).is_err());
    }

    #[test]
    fn non_finite_loss_reports_step() {
        let t = ToyBackbone::<f64>::default_random(1);
        let mut s = ToyBackbone::<f64>::default_random(2);
        s.stages_mut()[0].weight_mut()[0] = f64::NAN;
        let cfg = SgdConfig { steps: 2, ..Default::default() };
        assert!(matches!(train_student(&t, &s, &images(1, 32), &cfg, 0), Err(Error::NonFiniteLoss { step: 0 })));
    }
}
