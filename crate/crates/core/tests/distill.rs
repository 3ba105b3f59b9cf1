mod common;

use fracanom::distill::{
    bce_loss, csam, db_loss, dice_loss, image_to_tensor, kd_loss, kd_loss_and_grad, toy_normals,
    total_loss_and_grads, train_student, SgdConfig, BCE_EPS, DEFAULT_CHANNELS, DICE_SMOOTH,
};
use fracanom::fag::{generate, FagConfig};
use fracanom::ndtensor::Tensor as T;
use fracanom::{MaskBuffer, Tensor, ToyBackbone, ToyBackboneF32, ToyHead};
use proptest::prelude::*;

fn bits(b: &ToyBackbone) -> Vec<u64> {
    b.params().iter().map(|v| v.to_bits()).collect()
}

#[test]
fn pyramid_shapes_and_scaling() {
    let net = ToyBackbone::default_random(1);
    let p = net.forward(&Tensor::full(&[3, 64, 64], 0.3)).unwrap();
    let shapes: Vec<_> = p.stages().iter().map(|s| s.shape().to_vec()).collect();
    assert_eq!(shapes, [[8, 32, 32], [16, 16, 16], [32, 8, 8], [64, 4, 4]]);
    let big = net.forward(&Tensor::full(&[3, 128, 128], 0.3)).unwrap();
    for (a, b) in p.stages().iter().zip(big.stages()) {
        assert_eq!(b.shape()[1..], [a.shape()[1] * 2, a.shape()[2] * 2]);
    }
    assert!(net.forward(&Tensor::zeros(&[3, 40, 40])).is_err());
}

#[test]
fn zero_image_gives_zero_pyramid() {
    let p = ToyBackbone::default_random(2).forward(&Tensor::zeros(&[3, 32, 32])).unwrap();
    assert!(p.stages().iter().all(|s| s.data().iter().all(|&v| v == 0.0)));
}

#[test]
fn head_output_in_unit_interval() {
    let net = ToyBackbone::default_random(3);
    let head = ToyHead::random(&DEFAULT_CHANNELS, 4);
    let img: Tensor = image_to_tensor(&common::textured(32, 32, 5));
    let cache = head.forward(&net.forward(&img).unwrap(), (32, 32)).unwrap();
    assert_eq!(cache.prediction().shape(), [1, 32, 32]);
    assert!(cache.prediction().data().iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn student_gradient_is_opaque_to_segmentation_loss() {
    let teacher = ToyBackbone::default_random(10);
    let student = ToyBackbone::default_student(11);
    let head = ToyHead::random(&DEFAULT_CHANNELS, 12);
    let normals = toy_normals(2, 32, 13);
    let normal: Tensor = image_to_tensor(&normals[0]);
    let pair = generate(&normals[1], None, &FagConfig::default(), 14).unwrap();
    let anomalous: Tensor = image_to_tensor(&pair.anomaly_image);
    let teacher_bits = bits(&teacher);

    let (_, kd_only) = kd_loss_and_grad(&teacher.forward(&normal).unwrap(), &student, &normal).unwrap();
    let full = total_loss_and_grads(&teacher, &student, &head, &normal, &anomalous, &pair.mask).unwrap();
    assert_eq!(bits(&full.student), bits(&kd_only));
    let other_target = MaskBuffer::ones(32, 32);
    let perturbed = total_loss_and_grads(&teacher, &student, &head, &normal, &anomalous, &other_target).unwrap();
    assert_eq!(bits(&perturbed.student), bits(&kd_only));
    assert_ne!(perturbed.db, full.db);
    assert_eq!(full.loss, full.db + full.kd);
    assert_eq!(bits(&teacher), teacher_bits);

    let imgs: Vec<Tensor> = normals.iter().map(image_to_tensor).collect();
    let cfg = SgdConfig { steps: 3, ..Default::default() };
    train_student(&teacher, &student, &imgs, &cfg, 0).unwrap();
    assert_eq!(bits(&teacher), teacher_bits);
}

#[test]
fn training_is_seed_deterministic() {
    let teacher = ToyBackbone::default_random(20);
    let student = ToyBackbone::default_student(21);
    let imgs: Vec<Tensor> = toy_normals(4, 32, 22).iter().map(image_to_tensor).collect();
    let cfg = SgdConfig { steps: 4, batch_size: 2, ..Default::default() };
    let a = train_student(&teacher, &student, &imgs, &cfg, 5).unwrap();
    let b = train_student(&teacher, &student, &imgs, &cfg, 5).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
}

#[test]
fn region_gating_is_exact() {
    let (c, h, w) = (5, 6, 6);
    let t = T::<f64>::from_fn(&[c, h, w], |i| ((i * 37 % 11) as f64 - 5.0) / 3.0 + 0.1);
    let inside = |p: usize| (p % w) >= 3;
    let s = T::<f64>::from_fn(&[c, h, w], |i| if inside(i % (h * w)) { -t.data()[i] } else { t.data()[i] });
    let out = csam(&t, &s).unwrap();
    for (i, &v) in out.attended.value().data().iter().enumerate() {
        let expect = if inside(i % (h * w)) { s.data()[i] } else { 0.0 };
        assert_eq!(v, expect);
    }
}

#[test]
fn single_precision_stack() {
    let net = ToyBackboneF32::default_random(1);
    let img = T::<f32>::full(&[3, 32, 32], 0.4);
    let p = net.forward(&img).unwrap();
    assert_eq!(kd_loss(&p, &p).unwrap(), 0.0f32);
}

fn pyramid_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    let n = 2 * 8 * 8 + 2 * 4 * 4 + 2 * 2 * 2 + 2;
    (prop::collection::vec(-3.0f64..3.0, n), prop::collection::vec(-3.0f64..3.0, n))
}

fn to_pyramid(v: &[f64]) -> fracanom::FeaturePyramid {
    let mut off = 0;
    let stages = [8, 4, 2, 1]
        .iter()
        .map(|&s| {
            let len = 2 * s * s;
            let t = T::from_vec(&[2, s, s], v[off..off + len].to_vec()).unwrap();
            off += len;
            t
        })
        .collect();
    fracanom::FeaturePyramid::new(stages).unwrap()
}

proptest! {
    #[test]
    fn kd_and_attention_bounds((a, b) in pyramid_pair()) {
        let (t, s) = (to_pyramid(&a), to_pyramid(&b));
        let kd = kd_loss(&t, &s).unwrap();
        prop_assert!((0.0..=8.0).contains(&kd));
        for (ts, ss) in t.stages().iter().zip(s.stages()) {
            let out = csam(ts, ss).unwrap();
            prop_assert!(out.attention.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
        prop_assert_eq!(kd_loss(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn db_is_dice_plus_bce(p in prop::collection::vec(0.001f64..0.999, 48), m in prop::collection::vec(0u8..=1, 48)) {
        let pred = T::from_vec(&[1, 6, 8], p).unwrap();
        let target = MaskBuffer::from_raw(8, 6, m).unwrap();
        let db = db_loss(&pred, &target).unwrap();
        let parts = dice_loss(&pred, &target, DICE_SMOOTH).unwrap() + bce_loss(&pred, &target, BCE_EPS).unwrap();
        prop_assert!((db - parts).abs() <= 1e-12);
        let ideal = T::from_fn(&[1, 6, 8], |i| (target.data()[i] as f64).clamp(BCE_EPS, 1.0 - BCE_EPS));
        prop_assert!(db_loss(&ideal, &target).unwrap() <= db);
    }
}
