//! Minimal dense N-D array plus the channel-wise reductions used by the
//! distillation losses and the anomaly score.
//!
//! Feature maps use the batch-free `[channels, height, width]` layout.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Norm floor used by [`cosine_sim_channel`] when no explicit epsilon is given.
pub const DEFAULT_COSINE_EPS: f64 = 1e-8;

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let len = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; len] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "shape {shape:?} needs {len} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let len: usize = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: (0..len).map(&mut f).collect() }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    /// `(channels, height, width)` of a 3-D tensor.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::DimensionMismatch(format!(
                "expected a [C,H,W] tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    #[inline]
    pub fn at3(&self, c: usize, y: usize, x: usize) -> T {
        let (h, w) = (self.shape[1], self.shape[2]);
        self.data[(c * h + y) * w + x]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&self, factor: T) -> Self {
        self.map(|v| v * factor)
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Tensor::from_vec(shape, self.data)
    }

    pub fn ensure_same_shape(&self, other: &Tensor<T>) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape.clone(),
                found: other.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Casts every element to another scalar type.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
        }
    }
}

/// Arithmetic mean of every entry.
pub fn mean_all<T: Real>(t: &Tensor<T>) -> Result<T> {
    if t.is_empty() {
        return Err(Error::Empty("mean of an empty tensor"));
    }
    let sum: T = t.data.iter().copied().sum();
    Ok(sum / T::from_usize(t.len()).expect("length fits in scalar"))
}

/// Cosine similarity along the channel axis of two `[C,H,W]` tensors.
///
/// Each norm is floored at `eps`, so a zero feature vector yields 0 rather
/// than NaN. The result has shape `[H,W]`.
pub fn cosine_sim_channel<T: Real>(t: &Tensor<T>, s: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
    t.ensure_same_shape(s)?;
    if !(eps > T::zero()) {
        return Err(Error::InvalidArgument("cosine epsilon must be positive".into()));
    }
    let (c, h, w) = t.chw()?;
    let plane = h * w;
    let mut dot = vec![T::zero(); plane];
    let mut tt = vec![T::zero(); plane];
    let mut ss = vec![T::zero(); plane];
    for ch in 0..c {
        let ts = &t.data[ch * plane..(ch + 1) * plane];
        let sv = &s.data[ch * plane..(ch + 1) * plane];
        for i in 0..plane {
            dot[i] = dot[i] + ts[i] * sv[i];
            tt[i] = tt[i] + ts[i] * ts[i];
            ss[i] = ss[i] + sv[i] * sv[i];
        }
    }
    let data = (0..plane).map(|i| clamp_unit(dot[i] / cosine_denominator(tt[i], ss[i], eps))).collect();
    Tensor::from_vec(&[h, w], data)
}

/// `max(|t|, eps) * max(|s|, eps)` from the squared norms. When both norms
/// clear the floor it is evaluated as `sqrt(tt * ss)`, which makes the
/// cosine of parallel vectors exactly ±1.
#[inline]
pub(crate) fn cosine_denominator<T: Real>(tt: T, ss: T, eps: T) -> T {
    let (nt, ns) = (tt.sqrt(), ss.sqrt());
    if nt > eps && ns > eps {
        (tt * ss).sqrt()
    } else {
        nt.max(eps) * ns.max(eps)
    }
}

/// Clamps to [-1, 1], letting NaN through.
#[inline]
pub(crate) fn clamp_unit<T: Real>(c: T) -> T {
    if c > T::one() {
        T::one()
    } else if c < -T::one() {
        -T::one()
    } else {
        c
    }
}

/// Ordered per-stage feature maps emitted by a backbone.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid<T> {
    stages: Vec<Tensor<T>>,
}

impl<T: Real> FeaturePyramid<T> {
    /// Builds a pyramid, checking every stage is `[C,H,W]` with spatial
    /// extents strictly decreasing from stage to stage.
    pub fn new(stages: Vec<Tensor<T>>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::Empty("feature pyramid without stages"));
        }
        let mut prev: Option<(usize, usize)> = None;
        for stage in &stages {
            let (_, h, w) = stage.chw()?;
            if let Some((ph, pw)) = prev {
                if h >= ph || w >= pw {
                    return Err(Error::DimensionMismatch(format!(
                        "pyramid stages must shrink: {ph}x{pw} followed by {h}x{w}"
                    )));
                }
            }
            prev = Some((h, w));
        }
        Ok(FeaturePyramid { stages })
    }

    pub fn stages(&self) -> &[Tensor<T>] {
        &self.stages
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn into_stages(self) -> Vec<Tensor<T>> {
        self.stages
    }

    pub fn map_stages(&self, f: impl Fn(&Tensor<T>) -> Tensor<T>) -> Self {
        FeaturePyramid { stages: self.stages.iter().map(f).collect() }
    }

    pub fn ensure_compatible(&self, other: &FeaturePyramid<T>) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch(format!(
                "pyramids have {} and {} stages",
                self.len(),
                other.len()
            )));
        }
        for (a, b) in self.stages.iter().zip(&other.stages) {
            a.ensure_same_shape(b)?;
        }
        Ok(())
    }
}
