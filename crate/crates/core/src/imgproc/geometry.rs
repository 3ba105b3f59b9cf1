use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{ensure_dims, to_u8, ImageBuffer, MaskBuffer};
use crate::error::Result;
use crate::rng::seeded;

/// Which axes a random flip mirrored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FlipDraw {
    /// Left-right mirror.
    pub horizontal: bool,
    /// Top-bottom mirror.
    pub vertical: bool,
}

impl FlipDraw {
    /// Each axis independently with probability 0.5.
    pub fn sample(seed: u64) -> FlipDraw {
        let mut rng = seeded(seed);
        FlipDraw { horizontal: rng.random_bool(0.5), vertical: rng.random_bool(0.5) }
    }
}

pub fn flip(patch: &ImageBuffer, mask: &MaskBuffer, draw: FlipDraw) -> Result<(ImageBuffer, MaskBuffer)> {
    ensure_dims(patch.dims(), mask.dims())?;
    let (w, h) = patch.dims();
    let src = |x: usize, y: usize| {
        (if draw.horizontal { w - 1 - x } else { x }, if draw.vertical { h - 1 - y } else { y })
    };
    let image = ImageBuffer::from_fn(w, h, |x, y| {
        let (sx, sy) = src(x, y);
        patch.get(sx, sy)
    });
    let mask = MaskBuffer::from_fn(w, h, |x, y| {
        let (sx, sy) = src(x, y);
        mask.get(sx, sy)
    });
    Ok((image, mask))
}

pub fn random_flip(patch: &ImageBuffer, mask: &MaskBuffer, seed: u64) -> Result<(ImageBuffer, MaskBuffer)> {
    flip(patch, mask, FlipDraw::sample(seed))
}

/// Rotates image and mask together about the patch centre by `angle_deg`
/// (counter-clockwise as displayed). The canvas grows to the rotated
/// bounding box. The image is sampled bilinearly, the mask by nearest
/// neighbour; canvas pixels that fall outside the source are mask-0 and black.
pub fn rotate(patch: &ImageBuffer, mask: &MaskBuffer, angle_deg: f64) -> Result<(ImageBuffer, MaskBuffer)> {
    ensure_dims(patch.dims(), mask.dims())?;
    let (w, h) = patch.dims();
    let theta = angle_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let (wf, hf) = (w as f64, h as f64);
    // Tolerance keeps 360° and friends from growing the canvas by a pixel.
    let out_w = ((wf * cos).abs() + (hf * sin).abs() - 1e-9).ceil().max(1.0) as usize;
    let out_h = ((wf * sin).abs() + (hf * cos).abs() - 1e-9).ceil().max(1.0) as usize;
    let (cx, cy) = (wf / 2.0, hf / 2.0);
    let (ocx, ocy) = (out_w as f64 / 2.0, out_h as f64 / 2.0);

    let mut out_img = ImageBuffer::new(out_w, out_h);
    let mut out_mask = MaskBuffer::zeros(out_w, out_h);
    for j in 0..out_h {
        for i in 0..out_w {
            let dx = i as f64 + 0.5 - ocx;
            let dy = j as f64 + 0.5 - ocy;
            let sx = cos * dx - sin * dy + cx;
            let sy = sin * dx + cos * dy + cy;
            if !(sx >= 0.0 && sx < wf && sy >= 0.0 && sy < hf) {
                continue;
            }
            let m = mask.get(sx.floor() as usize, sy.floor() as usize);
            out_mask.set(i, j, m);
            out_img.set(i, j, bilinear(patch, sx - 0.5, sy - 0.5));
        }
    }
    // Nearest-neighbour output is already {0,1}; this is the 0.5 threshold.
    debug_assert!(out_mask.data().iter().all(|&v| v <= 1));
    Ok((out_img, out_mask))
}

fn bilinear(img: &ImageBuffer, u: f64, v: f64) -> [u8; 3] {
    let (w, h) = img.dims();
    let x0 = u.floor();
    let y0 = v.floor();
    let fx = u - x0;
    let fy = v - y0;
    let clampx = |x: f64| (x.max(0.0) as usize).min(w - 1);
    let clampy = |y: f64| (y.max(0.0) as usize).min(h - 1);
    let (xa, xb) = (clampx(x0), clampx(x0 + 1.0));
    let (ya, yb) = (clampy(y0), clampy(y0 + 1.0));
    let p00 = img.get(xa, ya);
    let p10 = img.get(xb, ya);
    let p01 = img.get(xa, yb);
    let p11 = img.get(xb, yb);
    let mut out = [0u8; 3];
    for c in 0..3 {
        let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
        let bottom = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
        out[c] = to_u8(top * (1.0 - fy) + bottom * fy);
    }
    out
}
