use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{to_u8, ImageBuffer};
use crate::rng::seeded;

/// Colour jitter family. One is picked uniformly per generated anomaly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JitterMode {
    /// Brightness, contrast, saturation and hue at a mild strength.
    Bcsh,
    /// Brightness and contrast only, at full strength.
    Bc,
    /// Two random channels scaled by independent random factors.
    RandomColor,
}

impl JitterMode {
    pub const ALL: [JitterMode; 3] = [JitterMode::Bcsh, JitterMode::Bc, JitterMode::RandomColor];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JitterStrengths {
    pub bcsh: f64,
    pub bc: f64,
    /// Factor range for [`JitterMode::RandomColor`].
    pub random_color: (f64, f64),
}

impl Default for JitterStrengths {
    fn default() -> Self {
        JitterStrengths { bcsh: 0.2, bc: 1.0, random_color: (0.0, 2.0) }
    }
}

pub fn color_jitter(patch: &ImageBuffer, mode: JitterMode, seed: u64) -> ImageBuffer {
    color_jitter_with(patch, mode, &JitterStrengths::default(), seed)
}

pub fn color_jitter_with(patch: &ImageBuffer, mode: JitterMode, strengths: &JitterStrengths, seed: u64) -> ImageBuffer {
    let mut rng = seeded(seed);
    match mode {
        JitterMode::Bcsh => {
            let s = strengths.bcsh;
            let b = factor(&mut rng, s);
            let c = factor(&mut rng, s);
            let sat = factor(&mut rng, s);
            // Hue offset in turns, as torchvision's ColorJitter draws it.
            let h = if s > 0.0 { rng.random_range(-s..=s) } else { 0.0 };
            adjust(patch, b, c, sat, h)
        }
        JitterMode::Bc => {
            let s = strengths.bc;
            let b = factor(&mut rng, s);
            let c = factor(&mut rng, s);
            adjust(patch, b, c, 1.0, 0.0)
        }
        JitterMode::RandomColor => {
            let first = rng.random_range(0..3usize);
            let mut second = rng.random_range(0..2usize);
            if second >= first {
                second += 1;
            }
            let (lo, hi) = strengths.random_color;
            let f1 = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let f2 = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            random_color(patch, [first, second], [f1, f2])
        }
    }
}

/// Multiplies two channels by the given factors with saturation at 255.
pub fn random_color(patch: &ImageBuffer, channels: [usize; 2], factors: [f64; 2]) -> ImageBuffer {
    patch.map_pixels(|mut px| {
        for (&c, &f) in channels.iter().zip(&factors) {
            px[c] = to_u8(px[c] as f64 * f);
        }
        px
    })
}

fn factor(rng: &mut impl rand::Rng, strength: f64) -> f64 {
    if strength <= 0.0 {
        return 1.0;
    }
    let lo = (1.0 - strength).max(0.0);
    rng.random_range(lo..=1.0 + strength)
}

fn gray(px: [f64; 3]) -> f64 {
    0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]
}

fn clamp3(px: [f64; 3]) -> [f64; 3] {
    px.map(|v| v.clamp(0.0, 255.0))
}

/// Brightness, contrast, saturation, hue applied in that order, with
/// clamping after every step.
fn adjust(patch: &ImageBuffer, brightness: f64, contrast: f64, saturation: f64, hue_turns: f64) -> ImageBuffer {
    let mut px: Vec<[f64; 3]> = patch
        .data()
        .chunks_exact(3)
        .map(|c| [c[0] as f64, c[1] as f64, c[2] as f64])
        .collect();

    if brightness != 1.0 {
        for p in &mut px {
            *p = clamp3(p.map(|v| v * brightness));
        }
    }
    if contrast != 1.0 && !px.is_empty() {
        let mean = px.iter().map(|&p| gray(p)).sum::<f64>() / px.len() as f64;
        for p in &mut px {
            *p = clamp3(p.map(|v| contrast * v + (1.0 - contrast) * mean));
        }
    }
    if saturation != 1.0 {
        for p in &mut px {
            let g = gray(*p);
            *p = clamp3(p.map(|v| saturation * v + (1.0 - saturation) * g));
        }
    }
    if hue_turns != 0.0 {
        for p in &mut px {
            let (h, s, v) = rgb_to_hsv(*p);
            *p = clamp3(hsv_to_rgb((h + hue_turns).rem_euclid(1.0), s, v));
        }
    }

    let data = px.iter().flat_map(|p| p.map(to_u8)).collect();
    ImageBuffer::from_raw(patch.width(), patch.height(), data).expect("dimensions preserved")
}

/// RGB in [0,255] to HSV with hue in turns [0,1), s and v in [0,1].
fn rgb_to_hsv([r, g, b]: [f64; 3]) -> (f64, f64, f64) {
    let (r, g, b) = (r / 255.0, g / 255.0, b / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / delta).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    (h, s, max)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let sector = h * 6.0;
    let i = sector.floor();
    let f = sector - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    let (r, g, b) = match (i as i64).rem_euclid(6) {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    [r * 255.0, g * 255.0, b * 255.0]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_patch() -> ImageBuffer {
        ImageBuffer::from_fn(9, 7, |x, y| [(x * 28) as u8, (y * 36) as u8, ((x + y) * 15) as u8])
    }

    #[test]
    fn zero_strength_bcsh_is_identity() {
        let p = sample_patch();
        let s = JitterStrengths { bcsh: 0.0, ..Default::default() };
        for seed in 0..5 {
            assert_eq!(color_jitter_with(&p, JitterMode::Bcsh, &s, seed), p);
        }
    }

    #[test]
    fn hsv_round_trip_is_exact_after_rounding() {
        let p = sample_patch();
        let out = adjust(&p, 1.0, 1.0, 1.0, 1.0);
        assert_eq!(out, p);
    }

    #[test]
    fn random_color_unit_factors_identity() {
        let p = sample_patch();
        assert_eq!(random_color(&p, [0, 2], [1.0, 1.0]), p);
    }

    #[test]
    fn random_color_saturates() {
        let p = ImageBuffer::filled(2, 2, [200, 10, 10]);
        let out = random_color(&p, [0, 1], [2.0, 1.0]);
        assert_eq!(out.get(1, 1), [255, 10, 10]);
    }

    #[test]
    fn random_color_touches_two_distinct_channels() {
        let p = ImageBuffer::filled(3, 3, [100, 100, 100]);
        let s = JitterStrengths { random_color: (0.5, 0.5), ..Default::default() };
        for seed in 0..50 {
            let out = color_jitter_with(&p, JitterMode::RandomColor, &s, seed);
            let px = out.get(0, 0);
            assert_eq!(px.iter().filter(|&&v| v == 50).count(), 2);
            assert_eq!(px.iter().filter(|&&v| v == 100).count(), 1);
        }
    }

    #[test]
    fn jitter_is_seeded() {
        let p = sample_patch();
        for mode in JitterMode::ALL {
            assert_eq!(color_jitter(&p, mode, 9), color_jitter(&p, mode, 9));
        }
    }

    #[test]
    fn full_hue_turn_is_identity() {
        let p = sample_patch();
        let out = adjust(&p, 1.0, 1.0, 1.0, 0.5);
        assert_ne!(out, p);
        let back = adjust(&out, 1.0, 1.0, 1.0, 0.5);
        // two half turns, each rounded to u8
        for (a, b) in back.data().iter().zip(p.data()) {
            assert!((*a as i32 - *b as i32).abs() <= 2);
        }
    }

    #[test]
    fn bc_mode_can_darken_to_black() {
        let p = ImageBuffer::filled(2, 2, [120, 60, 30]);
        let out = adjust(&p, 0.0, 1.0, 1.0, 0.0);
        assert_eq!(out.get(0, 0), [0, 0, 0]);
    }
}
