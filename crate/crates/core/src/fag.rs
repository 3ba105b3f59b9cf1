//! Fractal anomaly generator.
//!
//! A patch is cut from a normal image, augmented (colour jitter, flips,
//! rotation, noise), intersected with a random IFS attractor and pasted back
//! at a random position. The pasted attractor footprint, dilated, is the
//! label mask.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ifs::{render_attractor, sample_ifs, IfsSamplingConfig, IfsSystem, RenderConfig};
use crate::imgproc::{
    apply_mask, color_jitter_with, dilate, flip, gaussian_noise, mask_and, paste, rotate, FlipDraw, ImageBuffer,
    JitterMode, JitterStrengths, MaskBuffer, Rect,
};
use crate::rng::{seeded, Rng};

/// Smallest patch side; the attractor raster needs at least 8 pixels.
pub const MIN_PATCH_SIDE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub mean: f64,
    pub std: f64,
    pub probability: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { mean: 0.0, std: 20.0, probability: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FagConfig {
    /// Patch area as a fraction of the image area, drawn uniformly.
    pub patch_area_fraction_range: (f64, f64),
    /// Patch width/height ratio, drawn uniformly.
    pub aspect_ratio_range: (f64, f64),
    /// Rotation angle in degrees, drawn uniformly.
    pub rotation_range: (f64, f64),
    pub noise: NoiseConfig,
    pub jitter: JitterStrengths,
    /// Iterations of 3×3 dilation applied to the label mask.
    pub dilation_iterations: usize,
    /// Keep the anomaly inside the supplied object mask.
    pub object_constrained: bool,
    pub max_resample_attempts: usize,
    pub ifs: IfsSamplingConfig,
    pub render: RenderConfig,
}

impl Default for FagConfig {
    fn default() -> Self {
        FagConfig {
            patch_area_fraction_range: (0.005, 0.06),
            aspect_ratio_range: (0.5, 2.0),
            rotation_range: (15.0, 75.0),
            noise: NoiseConfig::default(),
            jitter: JitterStrengths::default(),
            dilation_iterations: 3,
            object_constrained: false,
            max_resample_attempts: 10,
            ifs: IfsSamplingConfig::default(),
            render: RenderConfig::default(),
        }
    }
}

impl FagConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let (lo, hi) = self.patch_area_fraction_range;
        if !(0.0 < lo && lo <= hi && hi < 1.0) {
            return bad(format!("patch_area_fraction_range ({lo}, {hi}) must satisfy 0 < lo <= hi < 1"));
        }
        let (lo, hi) = self.aspect_ratio_range;
        if !(0.0 < lo && lo <= hi && hi.is_finite()) {
            return bad(format!("aspect_ratio_range ({lo}, {hi}) invalid"));
        }
        let (lo, hi) = self.rotation_range;
        if !(0.0 <= lo && lo <= hi && hi <= 90.0) {
            return bad(format!("rotation_range ({lo}, {hi}) must lie within [0, 90]"));
        }
        let n = self.noise;
        if !(n.std >= 0.0 && n.std.is_finite() && n.mean.is_finite() && (0.0..=1.0).contains(&n.probability)) {
            return bad(format!("noise {n:?} invalid"));
        }
        let j = self.jitter;
        if !(j.bcsh >= 0.0 && j.bc >= 0.0 && 0.0 <= j.random_color.0 && j.random_color.0 <= j.random_color.1) {
            return bad(format!("jitter strengths {j:?} invalid"));
        }
        if self.max_resample_attempts == 0 {
            return bad("max_resample_attempts must be at least 1".into());
        }
        if self.render.point_budget < 1000 || self.render.burn_in < 1 {
            return bad(format!("render settings {:?} invalid", self.render));
        }
        self.ifs.validate()
    }
}

/// Random augmentation choices for one patch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentDraw {
    pub jitter_mode: JitterMode,
    pub jitter_seed: u64,
    pub flips: FlipDraw,
    pub rotation_deg: f64,
    pub noise_seed: u64,
}

impl AugmentDraw {
    pub fn sample(rng: &mut Rng, config: &FagConfig) -> Self {
        let jitter_mode = JitterMode::ALL[rng.random_range(0..JitterMode::ALL.len())];
        let jitter_seed = rng.random();
        let flips = FlipDraw::sample(rng.random());
        let (lo, hi) = config.rotation_range;
        let rotation_deg = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let noise_seed = rng.random();
        AugmentDraw { jitter_mode, jitter_seed, flips, rotation_deg, noise_seed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleMeta {
    pub seed: u64,
    /// Region cut from the normal image.
    pub patch_rect: Rect,
    /// Top-left corner of the augmented patch in the output image.
    pub paste_position: (usize, usize),
    pub ifs_seed: u64,
    pub jitter_mode: JitterMode,
    pub augment: AugmentDraw,
    /// Attempts consumed, including the successful one.
    pub attempts: usize,
    /// Why earlier attempts were discarded.
    pub retry_log: Vec<String>,
    /// Attractor footprint on the full canvas before dilation.
    pub pre_dilation_mask: MaskBuffer,
}

/// Anomalous image, its label mask and how it was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub anomaly_image: ImageBuffer,
    /// Dilated label mask.
    pub mask: MaskBuffer,
    pub meta: SampleMeta,
}

/// Produces one `(anomalous image, label mask)` pair from a normal image.
///
/// Pure in `(x_nor, object_mask, config, seed)`. Degenerate attractors,
/// empty intersections and infeasible placements are retried with fresh
/// draws up to `config.max_resample_attempts` times.
pub fn generate(
    x_nor: &ImageBuffer,
    object_mask: Option<&MaskBuffer>,
    config: &FagConfig,
    seed: u64,
) -> Result<SamplePair> {
    config.validate()?;
    let (w, h) = x_nor.dims();
    if w < MIN_PATCH_SIDE || h < MIN_PATCH_SIDE {
        return Err(Error::InvalidArgument(format!("image {w}x{h} smaller than {MIN_PATCH_SIDE}x{MIN_PATCH_SIDE}")));
    }
    let object = if config.object_constrained {
        let m = object_mask
            .ok_or_else(|| Error::InvalidArgument("object-constrained generation needs an object mask".into()))?;
        if m.dims() != (w, h) {
            return Err(Error::DimensionMismatch(format!(
                "object mask {}x{} vs image {w}x{h}",
                m.width(),
                m.height()
            )));
        }
        if !m.any() {
            return Err(Error::InvalidArgument("object mask is empty".into()));
        }
        Some(m)
    } else {
        None
    };

    let mut rng = seeded(seed);
    let mut log = Vec::new();
    for attempt in 1..=config.max_resample_attempts {
        let ifs_seed: u64 = rng.random();
        let system: IfsSystem<f64> = sample_ifs(ifs_seed, &config.ifs)?;
        let rect = sample_patch_rect(&mut rng, config, (w, h), object);
        let augment = AugmentDraw::sample(&mut rng, config);
        let placement_seed: u64 = rng.random();

        let x_p = x_nor.crop(rect)?;
        let x_pm = MaskBuffer::ones(rect.width, rect.height);
        let (x_aug, x_pm) = augment_patch(&x_p, &x_pm, &augment, config)?;
        let (pw, ph) = x_aug.dims();
        if pw > w || ph > h {
            log.push(format!("attempt {attempt}: rotated patch {pw}x{ph} exceeds image"));
            continue;
        }

        let x_f = render_attractor(&system, pw, ph, config.render.point_budget, config.render.burn_in)?;
        if x_f.degenerate {
            log.push(format!("attempt {attempt}: degenerate attractor (occupancy {:.4})", x_f.occupancy));
            continue;
        }
        let x_fm = mask_and(&x_f.pixels, &x_pm)?;
        if !x_fm.any() {
            log.push(format!("attempt {attempt}: attractor misses the patch support"));
            continue;
        }
        let x_fp = apply_mask(&x_aug, &x_fm)?;

        let mut prng = seeded(placement_seed);
        let position = match object {
            None => (prng.random_range(0..=w - pw), prng.random_range(0..=h - ph)),
            Some(obj) => match sample_contained_position(&mut prng, &x_fm, obj) {
                Some(p) => p,
                None => {
                    log.push(format!("attempt {attempt}: no placement keeps the anomaly inside the object"));
                    continue;
                }
            },
        };

        let anomaly_image = paste(x_nor, &x_fp, &x_fm, position)?;
        let pre_dilation_mask = x_fm.placed_on_canvas(w, h, position)?;
        let mask = dilate(&pre_dilation_mask, config.dilation_iterations);
        return Ok(SamplePair {
            anomaly_image,
            mask,
            meta: SampleMeta {
                seed,
                patch_rect: rect,
                paste_position: position,
                ifs_seed,
                jitter_mode: augment.jitter_mode,
                augment,
                attempts: attempt,
                retry_log: log,
                pre_dilation_mask,
            },
        });
    }
    Err(Error::ResampleExhausted { attempts: log })
}

/// Jitter, flip, rotate, then noise. Returns the augmented patch and its
/// support mask on the rotated canvas.
pub fn augment_patch(
    patch: &ImageBuffer,
    mask: &MaskBuffer,
    draw: &AugmentDraw,
    config: &FagConfig,
) -> Result<(ImageBuffer, MaskBuffer)> {
    let jittered = color_jitter_with(patch, draw.jitter_mode, &config.jitter, draw.jitter_seed);
    let (flipped, fmask) = flip(&jittered, mask, draw.flips)?;
    let (rotated, rmask) = rotate(&flipped, &fmask, draw.rotation_deg)?;
    let n = config.noise;
    let noisy = gaussian_noise(&rotated, n.mean, n.std, n.probability, draw.noise_seed)?;
    Ok((noisy, rmask))
}

fn sample_patch_rect(rng: &mut Rng, config: &FagConfig, (w, h): (usize, usize), object: Option<&MaskBuffer>) -> Rect {
    let (alo, ahi) = config.patch_area_fraction_range;
    let (rlo, rhi) = config.aspect_ratio_range;
    let frac = if ahi > alo { rng.random_range(alo..=ahi) } else { alo };
    let aspect = if rhi > rlo { rng.random_range(rlo..=rhi) } else { rlo };
    let area = frac * (w * h) as f64;
    let pw = ((area * aspect).sqrt().round() as usize).clamp(MIN_PATCH_SIDE, w);
    let ph = ((area / aspect).sqrt().round() as usize).clamp(MIN_PATCH_SIDE, h);
    let (x, y) = match object {
        None => (rng.random_range(0..=w - pw), rng.random_range(0..=h - ph)),
        Some(obj) => {
            // Centre the cut on a uniformly chosen object pixel.
            let k = rng.random_range(0..obj.count());
            let idx = obj.data().iter().enumerate().filter(|(_, &v)| v != 0).nth(k).map(|(i, _)| i).unwrap_or(0);
            let (cx, cy) = (idx % w, idx / w);
            (cx.saturating_sub(pw / 2).min(w - pw), cy.saturating_sub(ph / 2).min(h - ph))
        }
    };
    Rect { x, y, width: pw, height: ph }
}

/// Uniform choice among placements whose set pixels all land on the object.
fn sample_contained_position(rng: &mut Rng, patch_mask: &MaskBuffer, object: &MaskBuffer) -> Option<(usize, usize)> {
    let (w, h) = object.dims();
    let (pw, ph) = patch_mask.dims();
    let set: Vec<(usize, usize)> =
        (0..ph).flat_map(|y| (0..pw).map(move |x| (x, y))).filter(|&(x, y)| patch_mask.get(x, y)).collect();
    let mut feasible = Vec::new();
    for oy in 0..=h - ph {
        for ox in 0..=w - pw {
            if set.iter().all(|&(x, y)| object.get(ox + x, oy + y)) {
                feasible.push((ox, oy));
            }
        }
    }
    if feasible.is_empty() {
        None
    } else {
        Some(feasible[rng.random_range(0..feasible.len())])
    }
}

/// Repeats `items` round-robin until there are `target` of them. Inputs
/// already at or above the target are returned unchanged.
pub fn expand_training_set<T: Clone>(items: &[T], target: usize) -> Result<Vec<T>> {
    if items.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if target == 0 {
        return Err(Error::InvalidArgument("target count must be at least 1".into()));
    }
    if items.len() >= target {
        return Ok(items.to_vec());
    }
    Ok(items.iter().cycle().take(target).cloned().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normal(w: usize, h: usize) -> ImageBuffer {
        ImageBuffer::from_fn(w, h, |x, y| [(40 + x % 50) as u8, (90 + (x + y) % 40) as u8, (150 + y % 30) as u8])
    }

    #[test]
    fn default_config_is_valid() {
        FagConfig::default().validate().unwrap();
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = FagConfig::default();
        c.patch_area_fraction_range = (0.0, 0.1);
        assert!(c.validate().is_err());
        let mut c = FagConfig::default();
        c.rotation_range = (10.0, 100.0);
        assert!(c.validate().is_err());
        let mut c = FagConfig::default();
        c.max_resample_attempts = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn generate_is_deterministic() {
        let img = normal(96, 80);
        let cfg = FagConfig::default();
        let a = generate(&img, None, &cfg, 17).unwrap();
        let b = generate(&img, None, &cfg, 17).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn anomaly_confined_to_pre_dilation_mask() {
        let img = normal(96, 96);
        let cfg = FagConfig::default();
        for seed in 0..20 {
            let pair = generate(&img, None, &cfg, seed).unwrap();
            let pre = &pair.meta.pre_dilation_mask;
            assert!(pre.any());
            assert!(pre.is_subset_of(&pair.mask));
            for y in 0..96 {
                for x in 0..96 {
                    if !pre.get(x, y) {
                        assert_eq!(pair.anomaly_image.get(x, y), img.get(x, y));
                    }
                }
            }
        }
    }

    #[test]
    fn object_constraint_holds() {
        let img = normal(64, 64);
        let obj = MaskBuffer::from_fn(64, 64, |x, y| (x as i64 - 32).pow(2) + (y as i64 - 32).pow(2) < 24 * 24);
        let cfg = FagConfig { object_constrained: true, ..Default::default() };
        for seed in 0..10 {
            let pair = generate(&img, Some(&obj), &cfg, seed).unwrap();
            assert!(pair.meta.pre_dilation_mask.is_subset_of(&obj));
        }
    }

    #[test]
    fn object_constraint_requires_mask() {
        let cfg = FagConfig { object_constrained: true, ..Default::default() };
        assert!(generate(&normal(32, 32), None, &cfg, 0).is_err());
    }

    #[test]
    fn infeasible_object_exhausts_budget_with_log() {
        let img = normal(64, 64);
        let mut obj = MaskBuffer::zeros(64, 64);
        obj.set(10, 10, true);
        let cfg = FagConfig { object_constrained: true, max_resample_attempts: 3, ..Default::default() };
        match generate(&img, Some(&obj), &cfg, 1) {
            Err(Error::ResampleExhausted { attempts }) => assert_eq!(attempts.len(), 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tiny_image_rejected() {
        assert!(generate(&normal(7, 30), None, &FagConfig::default(), 0).is_err());
    }

    #[test]
    fn expand_round_robin() {
        assert_eq!(expand_training_set(&["a", "b", "c"], 5).unwrap(), vec!["a", "b", "c", "a", "b"]);
        assert_eq!(expand_training_set(&["x"], 4).unwrap(), vec!["x"; 4]);
        let many: Vec<usize> = (0..391).collect();
        assert_eq!(expand_training_set(&many, 391).unwrap(), many);
        assert_eq!(expand_training_set(&many, 10).unwrap(), many);
        assert!(expand_training_set::<u8>(&[], 3).is_err());
    }
}
