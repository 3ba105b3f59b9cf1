//! Toy convolutional backbone and linear segmentation head with hand-written
//! backward passes.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::ndtensor::{FeaturePyramid, Tensor};
use crate::rng::seeded;
use crate::scalar::Real;

/// Output channels of the four default stages.
pub const DEFAULT_CHANNELS: [usize; 4] = [8, 16, 32, 64];

/// Weight scale applied to a freshly initialised student. The cosine loss is
/// scale invariant, so a small student takes proportionally larger steps.
pub const STUDENT_INIT_GAIN: f64 = 0.25;

/// 3×3 convolution, stride 2, edge-replicating padding 1, followed by tanh.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvStage<T> {
    in_channels: usize,
    out_channels: usize,
    /// `[out][in][3][3]`, row-major.
    weight: Vec<T>,
    bias: Vec<T>,
}

impl<T: Real> ConvStage<T> {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        ConvStage {
            in_channels,
            out_channels,
            weight: vec![T::zero(); out_channels * in_channels * 9],
            bias: vec![T::zero(); out_channels],
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn weight(&self) -> &[T] {
        &self.weight
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn weight_mut(&mut self) -> &mut [T] {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias
    }

    fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Pre-activation of the stage.
    fn conv(&self, input: &Tensor<T>) -> Tensor<T> {
        let (ci, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let (oh, ow) = (h / 2, w / 2);
        let x = input.data();
        let mut out = Tensor::zeros(&[self.out_channels, oh, ow]);
        let od = out.data_mut();
        for o in 0..self.out_channels {
            let plane = &mut od[o * oh * ow..(o + 1) * oh * ow];
            plane.iter_mut().for_each(|v| *v = self.bias[o]);
            for i in 0..ci {
                let xin = &x[i * h * w..(i + 1) * h * w];
                let k = &self.weight[(o * ci + i) * 9..(o * ci + i + 1) * 9];
                for oy in 0..oh {
                    for ky in 0..3 {
                        let iy = tap(oy, ky, h);
                        let row = &xin[iy * w..(iy + 1) * w];
                        for ox in 0..ow {
                            let mut acc = T::zero();
                            for kx in 0..3 {
                                acc = acc + k[ky * 3 + kx] * row[tap(ox, kx, w)];
                            }
                            plane[oy * ow + ox] = plane[oy * ow + ox] + acc;
                        }
                    }
                }
            }
        }
        out
    }

    /// Backward through tanh and the convolution. `output` is the stage's
    /// post-activation. Accumulates parameter gradients into `grad` and
    /// returns the gradient with respect to `input` when requested.
    fn backward(
        &self,
        input: &Tensor<T>,
        output: &Tensor<T>,
        d_output: &Tensor<T>,
        grad: &mut ConvStage<T>,
        want_input_grad: bool,
    ) -> Option<Tensor<T>> {
        let (ci, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let (oh, ow) = (h / 2, w / 2);
        let dz: Vec<T> =
            output.data().iter().zip(d_output.data()).map(|(&y, &g)| g * (T::one() - y * y)).collect();
        let x = input.data();
        let mut dx = if want_input_grad { Some(Tensor::zeros(input.shape())) } else { None };
        for o in 0..self.out_channels {
            let dzp = &dz[o * oh * ow..(o + 1) * oh * ow];
            grad.bias[o] = grad.bias[o] + dzp.iter().copied().sum();
            for i in 0..ci {
                let xin = &x[i * h * w..(i + 1) * h * w];
                let kidx = (o * ci + i) * 9;
                for ky in 0..3 {
                    for kx in 0..3 {
                        let mut acc = T::zero();
                        let kv = self.weight[kidx + ky * 3 + kx];
                        for oy in 0..oh {
                            let iy = tap(oy, ky, h);
                            for ox in 0..ow {
                                let g = dzp[oy * ow + ox];
                                let at = iy * w + tap(ox, kx, w);
                                acc = acc + g * xin[at];
                                if let Some(dx) = dx.as_mut() {
                                    let d = &mut dx.data_mut()[i * h * w + at];
                                    *d = *d + kv * g;
                                }
                            }
                        }
                        grad.weight[kidx + ky * 3 + kx] = grad.weight[kidx + ky * 3 + kx] + acc;
                    }
                }
            }
        }
        dx
    }
}

/// Input index read by kernel tap `k` of output position `o`, with the
/// padding row or column replicating the nearest edge.
#[inline]
fn tap(o: usize, k: usize, n: usize) -> usize {
    (2 * o + k).saturating_sub(1).min(n - 1)
}

/// Stack of stride-2 convolution stages producing a feature pyramid.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyBackbone<T> {
    stages: Vec<ConvStage<T>>,
}

/// Per-stage inputs and outputs kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BackboneCache<T> {
    activations: Vec<Tensor<T>>,
}

impl<T: Real> BackboneCache<T> {
    pub fn pyramid(&self) -> FeaturePyramid<T> {
        FeaturePyramid::new(self.activations[1..].to_vec()).expect("backbone stages shrink")
    }
}

impl<T: Real> ToyBackbone<T> {
    /// Random initialisation, uniform with variance `1 / fan_in`, zero biases.
    pub fn random(in_channels: usize, channels: &[usize], seed: u64) -> Self {
        Self::random_with_gain(in_channels, channels, 1.0, seed)
    }

    /// As [`ToyBackbone::random`] with every weight multiplied by `gain`.
    pub fn random_with_gain(in_channels: usize, channels: &[usize], gain: f64, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let mut stages = Vec::with_capacity(channels.len());
        let mut cin = in_channels;
        for &cout in channels {
            let mut st = ConvStage::zeros(cin, cout);
            let bound = (3.0 / (cin * 9) as f64).sqrt();
            let scale = T::lit(gain);
            for v in &mut st.weight {
                *v = T::lit(rng.random_range(-bound..bound)) * scale;
            }
            stages.push(st);
            cin = cout;
        }
        ToyBackbone { stages }
    }

    /// Four stages with [`DEFAULT_CHANNELS`] over an RGB input.
    pub fn default_random(seed: u64) -> Self {
        Self::random(3, &DEFAULT_CHANNELS, seed)
    }

    /// Default architecture scaled by [`STUDENT_INIT_GAIN`].
    pub fn default_student(seed: u64) -> Self {
        Self::random_with_gain(3, &DEFAULT_CHANNELS, STUDENT_INIT_GAIN, seed)
    }

    pub fn zeros_like(&self) -> Self {
        ToyBackbone {
            stages: self.stages.iter().map(|s| ConvStage::zeros(s.in_channels, s.out_channels)).collect(),
        }
    }

    pub fn stages(&self) -> &[ConvStage<T>] {
        &self.stages
    }

    pub fn stages_mut(&mut self) -> &mut [ConvStage<T>] {
        &mut self.stages
    }

    pub fn same_architecture(&self, other: &ToyBackbone<T>) -> bool {
        self.stages.len() == other.stages.len()
            && self
                .stages
                .iter()
                .zip(&other.stages)
                .all(|(a, b)| a.in_channels == b.in_channels && a.out_channels == b.out_channels)
    }

    pub fn num_params(&self) -> usize {
        self.stages.iter().map(ConvStage::num_params).sum()
    }

    /// All parameters, stage by stage, weights before biases.
    pub fn params(&self) -> Vec<T> {
        self.stages.iter().flat_map(|s| s.weight.iter().chain(&s.bias).copied()).collect()
    }

    pub fn set_params(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        let mut it = params.iter().copied();
        for s in &mut self.stages {
            s.weight.iter_mut().chain(s.bias.iter_mut()).for_each(|v| *v = it.next().expect("length checked"));
        }
        Ok(())
    }

    /// `self += scale * other`, parameter-wise.
    pub fn add_scaled(&mut self, other: &ToyBackbone<T>, scale: T) {
        for (s, o) in self.stages.iter_mut().zip(&other.stages) {
            for (a, &b) in s.weight.iter_mut().zip(&o.weight) {
                *a = *a + scale * b;
            }
            for (a, &b) in s.bias.iter_mut().zip(&o.bias) {
                *a = *a + scale * b;
            }
        }
    }

    fn check_input(&self, image: &Tensor<T>) -> Result<()> {
        let (c, h, w) = image.chw()?;
        let first = self.stages.first().ok_or(Error::Empty("backbone without stages"))?;
        if c != first.in_channels {
            return Err(Error::DimensionMismatch(format!("input has {c} channels, backbone expects {}", first.in_channels)));
        }
        let factor = 1usize << self.stages.len();
        if h % factor != 0 || w % factor != 0 || h == 0 || w == 0 {
            return Err(Error::DimensionMismatch(format!("input {h}x{w} not divisible by {factor}")));
        }
        Ok(())
    }

    pub fn forward_cached(&self, image: &Tensor<T>) -> Result<BackboneCache<T>> {
        self.check_input(image)?;
        let mut activations = Vec::with_capacity(self.stages.len() + 1);
        activations.push(image.clone());
        for st in &self.stages {
            let z = st.conv(activations.last().expect("non-empty"));
            activations.push(z.map(|v| v.tanh()));
        }
        Ok(BackboneCache { activations })
    }

    /// Per-stage feature maps of `image` (`[C,H,W]`, sides divisible by
    /// `2^stages`).
    pub fn forward(&self, image: &Tensor<T>) -> Result<FeaturePyramid<T>> {
        Ok(self.forward_cached(image)?.pyramid())
    }

    /// Parameter gradient given the gradient with respect to each stage's
    /// output.
    pub fn backward(&self, cache: &BackboneCache<T>, stage_grads: &[Tensor<T>]) -> Result<ToyBackbone<T>> {
        if stage_grads.len() != self.stages.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} stage gradients for {} stages",
                stage_grads.len(),
                self.stages.len()
            )));
        }
        let mut grad = self.zeros_like();
        let mut carry: Option<Tensor<T>> = None;
        for i in (0..self.stages.len()).rev() {
            let mut d_out = stage_grads[i].clone();
            cache.activations[i + 1].ensure_same_shape(&d_out)?;
            if let Some(c) = carry.take() {
                for (a, &b) in d_out.data_mut().iter_mut().zip(c.data()) {
                    *a = *a + b;
                }
            }
            carry = self.stages[i].backward(
                &cache.activations[i],
                &cache.activations[i + 1],
                &d_out,
                &mut grad.stages[i],
                i > 0,
            );
        }
        Ok(grad)
    }
}

/// Linear segmentation head: a 1×1 projection of every stage to one
/// channel, bilinear upsampling to the input size, sum, sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyHead<T> {
    /// One weight vector per stage.
    weights: Vec<Vec<T>>,
    biases: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct HeadCache<T> {
    features: Vec<Tensor<T>>,
    out_hw: (usize, usize),
    pred: Tensor<T>,
}

impl<T: Real> HeadCache<T> {
    pub fn prediction(&self) -> &Tensor<T> {
        &self.pred
    }
}

impl<T: Real> ToyHead<T> {
    pub fn random(channels: &[usize], seed: u64) -> Self {
        let mut rng = seeded(seed);
        let weights = channels
            .iter()
            .map(|&c| {
                let bound = (3.0 / c as f64).sqrt();
                (0..c).map(|_| T::lit(rng.random_range(-bound..bound))).collect()
            })
            .collect();
        ToyHead { weights, biases: vec![T::zero(); channels.len()] }
    }

    pub fn zeros_like(&self) -> Self {
        ToyHead {
            weights: self.weights.iter().map(|w| vec![T::zero(); w.len()]).collect(),
            biases: vec![T::zero(); self.biases.len()],
        }
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.len()
    }

    /// Stage weights in order, then the biases.
    pub fn params(&self) -> Vec<T> {
        self.weights.iter().flatten().chain(&self.biases).copied().collect()
    }

    pub fn set_params(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} head parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        let mut it = params.iter().copied();
        self.weights.iter_mut().flatten().chain(self.biases.iter_mut()).for_each(|v| *v = it.next().expect("checked"));
        Ok(())
    }

    pub fn add_scaled(&mut self, other: &ToyHead<T>, scale: T) {
        for (a, b) in self.weights.iter_mut().flatten().zip(other.weights.iter().flatten()) {
            *a = *a + scale * *b;
        }
        for (a, &b) in self.biases.iter_mut().zip(&other.biases) {
            *a = *a + scale * b;
        }
    }

    /// Prediction `[1,H,W]` in (0,1) for an input of spatial size `out_hw`.
    pub fn forward(&self, pyramid: &FeaturePyramid<T>, out_hw: (usize, usize)) -> Result<HeadCache<T>> {
        if pyramid.len() != self.weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "head has {} stages, pyramid {}",
                self.weights.len(),
                pyramid.len()
            )));
        }
        let (oh, ow) = out_hw;
        let mut logits = vec![T::zero(); oh * ow];
        for (s, f) in pyramid.stages().iter().enumerate() {
            let (c, h, w) = f.chw()?;
            if c != self.weights[s].len() {
                return Err(Error::DimensionMismatch(format!("stage {s}: {c} channels, head expects {}", self.weights[s].len())));
            }
            let proj = self.project(s, f);
            let up = upsample(&proj, (h, w), out_hw);
            for (l, u) in logits.iter_mut().zip(up) {
                *l = *l + u;
            }
        }
        let pred = Tensor::from_vec(&[1, oh, ow], logits.into_iter().map(sigmoid).collect())?;
        Ok(HeadCache { features: pyramid.stages().to_vec(), out_hw, pred })
    }

    fn project(&self, s: usize, f: &Tensor<T>) -> Vec<T> {
        let (c, h, w) = (f.shape()[0], f.shape()[1], f.shape()[2]);
        let plane = h * w;
        let mut out = vec![self.biases[s]; plane];
        for k in 0..c {
            let wk = self.weights[s][k];
            for (o, &v) in out.iter_mut().zip(&f.data()[k * plane..(k + 1) * plane]) {
                *o = *o + wk * v;
            }
        }
        out
    }

    /// Gradients of the head parameters and of each input stage, given the
    /// gradient with respect to the prediction.
    pub fn backward(&self, cache: &HeadCache<T>, d_pred: &Tensor<T>) -> Result<(ToyHead<T>, Vec<Tensor<T>>)> {
        cache.pred.ensure_same_shape(d_pred)?;
        let d_logit: Vec<T> =
            cache.pred.data().iter().zip(d_pred.data()).map(|(&p, &g)| g * p * (T::one() - p)).collect();
        let mut grad = self.zeros_like();
        let mut d_features = Vec::with_capacity(cache.features.len());
        for (s, f) in cache.features.iter().enumerate() {
            let (c, h, w) = f.chw()?;
            let plane = h * w;
            let d_proj = upsample_transpose(&d_logit, (h, w), cache.out_hw);
            grad.biases[s] = d_proj.iter().copied().sum();
            let mut df = Tensor::zeros(&[c, h, w]);
            for k in 0..c {
                let fk = &f.data()[k * plane..(k + 1) * plane];
                grad.weights[s][k] = fk.iter().zip(&d_proj).map(|(&a, &b)| a * b).sum();
                let wk = self.weights[s][k];
                for (d, &g) in df.data_mut()[k * plane..(k + 1) * plane].iter_mut().zip(&d_proj) {
                    *d = wk * g;
                }
            }
            d_features.push(df);
        }
        Ok((grad, d_features))
    }
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Source taps `(i0, i1, frac)` for half-pixel-centred bilinear resizing
/// from `n_in` to `n_out` samples along one axis.
fn taps<T: Real>(n_in: usize, n_out: usize) -> Vec<(usize, usize, T)> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n_in - 1);
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, T::lit(src - i0 as f64))
        })
        .collect()
}

/// Bilinear resize of a single-channel plane.
pub fn upsample<T: Real>(src: &[T], (h, w): (usize, usize), (oh, ow): (usize, usize)) -> Vec<T> {
    let ty = taps::<T>(h, oh);
    let tx = taps::<T>(w, ow);
    let mut out = Vec::with_capacity(oh * ow);
    for &(y0, y1, fy) in &ty {
        for &(x0, x1, fx) in &tx {
            let top = src[y0 * w + x0] * (T::one() - fx) + src[y0 * w + x1] * fx;
            let bot = src[y1 * w + x0] * (T::one() - fx) + src[y1 * w + x1] * fx;
            out.push(top * (T::one() - fy) + bot * fy);
        }
    }
    out
}

fn upsample_transpose<T: Real>(grad: &[T], (h, w): (usize, usize), (oh, ow): (usize, usize)) -> Vec<T> {
    let ty = taps::<T>(h, oh);
    let tx = taps::<T>(w, ow);
    let mut out = vec![T::zero(); h * w];
    for (yo, &(y0, y1, fy)) in ty.iter().enumerate() {
        for (xo, &(x0, x1, fx)) in tx.iter().enumerate() {
            let g = grad[yo * ow + xo];
            let (gy0, gy1) = (g * (T::one() - fy), g * fy);
            out[y0 * w + x0] = out[y0 * w + x0] + gy0 * (T::one() - fx);
            out[y0 * w + x1] = out[y0 * w + x1] + gy0 * fx;
            out[y1 * w + x0] = out[y1 * w + x0] + gy1 * (T::one() - fx);
            out[y1 * w + x1] = out[y1 * w + x1] + gy1 * fx;
        }
    }
    out
}
