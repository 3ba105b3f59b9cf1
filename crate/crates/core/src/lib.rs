//! Fractal anomaly generation for synthetic defect data, plus a toy-scale
//! teacher-student distillation stack and AUROC evaluation.
//!
//! Numeric code is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`, with `*F32` variants where single
//! precision is useful.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dataset_io;
pub mod distill;
pub mod error;
pub mod eval;
pub mod fag;
pub mod ifs;
pub mod imgproc;
pub mod ndtensor;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use fag::{generate, FagConfig, SamplePair};
pub use imgproc::{ImageBuffer, MaskBuffer, Rect};

pub type Tensor = ndtensor::Tensor<f64>;
pub type TensorF32 = ndtensor::Tensor<f32>;
pub type FeaturePyramid = ndtensor::FeaturePyramid<f64>;
pub type FeaturePyramidF32 = ndtensor::FeaturePyramid<f32>;
pub type AffineMap = ifs::AffineMap<f64>;
pub type IfsSystem = ifs::IfsSystem<f64>;
pub type IfsSystemF32 = ifs::IfsSystem<f32>;
pub type ToyBackbone = distill::ToyBackbone<f64>;
pub type ToyBackboneF32 = distill::ToyBackbone<f32>;
pub type ToyHead = distill::ToyHead<f64>;
pub type ScoredSample = eval::ScoredSample<f64>;
