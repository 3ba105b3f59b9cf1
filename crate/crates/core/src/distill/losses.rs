//! Distillation, attention and segmentation losses, each with its gradient
//! with respect to the student-side / prediction-side input.

use crate::error::{Error, Result};
use crate::imgproc::MaskBuffer;
use crate::ndtensor::{clamp_unit, cosine_denominator, cosine_sim_channel, FeaturePyramid, Tensor, DEFAULT_COSINE_EPS};
use crate::scalar::Real;

/// Dice smoothing term.
pub const DICE_SMOOTH: f64 = 1.0;
/// Probability clamp for binary cross-entropy.
pub const BCE_EPS: f64 = 1e-7;

/// A value that gradients must not flow back through.
///
/// Downstream code can read the value but no backward pass accepts it as a
/// differentiable input, so nothing reaches the producers of the value.
#[derive(Debug, Clone, PartialEq)]
pub struct Detached<V>(V);

impl<V> Detached<V> {
    pub fn new(value: V) -> Self {
        Detached(value)
    }

    pub fn value(&self) -> &V {
        &self.0
    }

    pub fn into_inner(self) -> V {
        self.0
    }
}

fn eps<T: Real>() -> T {
    T::lit(DEFAULT_COSINE_EPS)
}

/// Sum over stages of the mean `1 - cos` between teacher and student
/// channel vectors.
pub fn kd_loss<T: Real>(teacher: &FeaturePyramid<T>, student: &FeaturePyramid<T>) -> Result<T> {
    teacher.ensure_compatible(student)?;
    let mut total = T::zero();
    for (t, s) in teacher.stages().iter().zip(student.stages()) {
        let cos = cosine_sim_channel(t, s, eps())?;
        let n = T::from_usize(cos.len()).expect("size fits");
        let stage: T = cos.data().iter().map(|&c| T::one() - c).sum();
        total = total + stage / n;
    }
    Ok(total)
}

/// [`kd_loss`] together with its gradient with respect to every student stage.
pub fn kd_loss_with_grad<T: Real>(
    teacher: &FeaturePyramid<T>,
    student: &FeaturePyramid<T>,
) -> Result<(T, Vec<Tensor<T>>)> {
    teacher.ensure_compatible(student)?;
    let e = eps::<T>();
    let mut total = T::zero();
    let mut grads = Vec::with_capacity(student.len());
    for (t, s) in teacher.stages().iter().zip(student.stages()) {
        let (c, h, w) = s.chw()?;
        let plane = h * w;
        let n = T::from_usize(plane).expect("size fits");
        let mut grad = Tensor::zeros(&[c, h, w]);
        let (td, sd) = (t.data(), s.data());
        let gd = grad.data_mut();
        let mut stage = T::zero();
        for i in 0..plane {
            let (mut dot, mut tt, mut ss) = (T::zero(), T::zero(), T::zero());
            for k in 0..c {
                let (a, b) = (td[k * plane + i], sd[k * plane + i]);
                dot = dot + a * b;
                tt = tt + a * a;
                ss = ss + b * b;
            }
            let nt = tt.sqrt().max(e);
            let raw_ns = ss.sqrt();
            let ns = raw_ns.max(e);
            let cos = dot / cosine_denominator(tt, ss, e);
            stage = stage + (T::one() - clamp_unit(cos));
            // d(1 - cos)/ds, scaled by the spatial mean.
            let norm_live = raw_ns > e;
            for k in 0..c {
                let a = td[k * plane + i];
                let b = sd[k * plane + i];
                let mut dcos = a / (nt * ns);
                if norm_live {
                    dcos = dcos - cos * b / (ns * ns);
                }
                gd[k * plane + i] = -dcos / n;
            }
        }
        total = total + stage / n;
        grads.push(grad);
    }
    Ok((total, grads))
}

/// Output of the cosine-similarity attention module for one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct CsamOutput<T> {
    /// Attention-gated student features, cut from gradient flow.
    pub attended: Detached<Tensor<T>>,
    /// `(1 - cos) / 2` per location, in [0, 1].
    pub attention: Tensor<T>,
}

pub fn csam<T: Real>(t: &Tensor<T>, s: &Tensor<T>) -> Result<CsamOutput<T>> {
    let cos = cosine_sim_channel(t, s, eps())?;
    let half = T::lit(0.5);
    let attention = cos.map(|c| (T::one() - c) * half);
    let (c, h, w) = s.chw()?;
    let plane = h * w;
    let att = attention.data();
    let attended = Tensor::from_fn(&[c, h, w], |i| att[i % plane] * s.data()[i]);
    Ok(CsamOutput { attended: Detached::new(attended), attention })
}

/// Stage-wise [`csam`] over whole pyramids. Returns the detached attended
/// pyramid and the per-stage attention maps.
pub fn csam_pyramid<T: Real>(
    teacher: &FeaturePyramid<T>,
    student: &FeaturePyramid<T>,
) -> Result<(Detached<FeaturePyramid<T>>, Vec<Tensor<T>>)> {
    teacher.ensure_compatible(student)?;
    let mut attended = Vec::with_capacity(teacher.len());
    let mut maps = Vec::with_capacity(teacher.len());
    for (t, s) in teacher.stages().iter().zip(student.stages()) {
        let out = csam(t, s)?;
        attended.push(out.attended.into_inner());
        maps.push(out.attention);
    }
    Ok((Detached::new(FeaturePyramid::new(attended)?), maps))
}

fn check_target<T: Real>(pred: &Tensor<T>, target: &MaskBuffer) -> Result<()> {
    let expected = pred.len();
    let (h, w) = match pred.shape() {
        [1, h, w] | [h, w] => (*h, *w),
        _ => (0, 0),
    };
    if (w, h) != target.dims() || expected != target.data().len() {
        return Err(Error::ShapeMismatch {
            expected: pred.shape().to_vec(),
            found: vec![1, target.height(), target.width()],
        });
    }
    Ok(())
}

pub fn dice_loss<T: Real>(pred: &Tensor<T>, target: &MaskBuffer, smooth: T) -> Result<T> {
    check_target(pred, target)?;
    let (inter, psum, ysum) = dice_sums(pred, target);
    let two = T::lit(2.0);
    Ok(T::one() - (two * inter + smooth) / (psum + ysum + smooth))
}

fn dice_sums<T: Real>(pred: &Tensor<T>, target: &MaskBuffer) -> (T, T, T) {
    let mut inter = T::zero();
    let mut psum = T::zero();
    let mut ysum = T::zero();
    for (&p, &y) in pred.data().iter().zip(target.data()) {
        psum = psum + p;
        if y != 0 {
            inter = inter + p;
            ysum = ysum + T::one();
        }
    }
    (inter, psum, ysum)
}

pub fn dice_loss_grad<T: Real>(pred: &Tensor<T>, target: &MaskBuffer, smooth: T) -> Result<Tensor<T>> {
    check_target(pred, target)?;
    let (inter, psum, ysum) = dice_sums(pred, target);
    let two = T::lit(2.0);
    let den = psum + ysum + smooth;
    let num = two * inter + smooth;
    let data = target
        .data()
        .iter()
        .map(|&y| {
            let yv = if y != 0 { T::one() } else { T::zero() };
            -(two * yv * den - num) / (den * den)
        })
        .collect();
    Tensor::from_vec(pred.shape(), data)
}

pub fn bce_loss<T: Real>(pred: &Tensor<T>, target: &MaskBuffer, clamp_eps: T) -> Result<T> {
    check_target(pred, target)?;
    let hi = T::one() - clamp_eps;
    let sum: T = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &y)| {
            let p = p.max(clamp_eps).min(hi);
            if y != 0 {
                -p.ln()
            } else {
                -(T::one() - p).ln()
            }
        })
        .sum();
    Ok(sum / T::from_usize(pred.len()).expect("size fits"))
}

pub fn bce_loss_grad<T: Real>(pred: &Tensor<T>, target: &MaskBuffer, clamp_eps: T) -> Result<Tensor<T>> {
    check_target(pred, target)?;
    let hi = T::one() - clamp_eps;
    let n = T::from_usize(pred.len()).expect("size fits");
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &y)| {
            if p < clamp_eps || p > hi {
                return T::zero();
            }
            if y != 0 {
                -T::one() / (p * n)
            } else {
                T::one() / ((T::one() - p) * n)
            }
        })
        .collect();
    Tensor::from_vec(pred.shape(), data)
}

/// Dice + BCE with unit weights and the default stabilisers.
pub fn db_loss<T: Real>(pred: &Tensor<T>, target: &MaskBuffer) -> Result<T> {
    Ok(dice_loss(pred, target, T::lit(DICE_SMOOTH))? + bce_loss(pred, target, T::lit(BCE_EPS))?)
}

pub fn db_loss_with_grad<T: Real>(pred: &Tensor<T>, target: &MaskBuffer) -> Result<(T, Tensor<T>)> {
    let loss = db_loss(pred, target)?;
    let mut g = dice_loss_grad(pred, target, T::lit(DICE_SMOOTH))?;
    let b = bce_loss_grad(pred, target, T::lit(BCE_EPS))?;
    for (a, &v) in g.data_mut().iter_mut().zip(b.data()) {
        *a = *a + v;
    }
    Ok((loss, g))
}

/// Segmentation loss plus distillation loss, unit weights.
pub fn total_loss<T: Real>(db: T, kd: T) -> T {
    db + kd
}
