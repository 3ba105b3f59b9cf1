#![allow(dead_code)]

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use fracanom::dataset_io::save_rgb;
use fracanom::{ImageBuffer, MaskBuffer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Set pixels within Chebyshev distance `r` of any set pixel of `m`.
pub fn chebyshev_dilate(m: &MaskBuffer, r: usize) -> MaskBuffer {
    let (w, h) = m.dims();
    let set: Vec<(usize, usize)> = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).filter(|&(x, y)| m.get(x, y)).collect();
    MaskBuffer::from_fn(w, h, |x, y| set.iter().any(|&(sx, sy)| sx.abs_diff(x) <= r && sy.abs_diff(y) <= r))
}

pub fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize) -> MaskBuffer {
    let density = rng.random_range(0.0..0.15);
    MaskBuffer::from_fn(w, h, |_, _| rng.random_bool(density))
}

/// Sierpinski gasket with corners (0,0), (1,0), (0.5,1) rasterised by
/// recursive subdivision: the edges of every depth-`depth` sub-triangle lie
/// on the gasket and are sampled densely. Pixel mapping matches the
/// renderer's: `round(1 + v * (n - 3))`.
pub fn sierpinski_subdivision(n: usize, depth: u32) -> MaskBuffer {
    fn recurse(a: [f64; 2], b: [f64; 2], c: [f64; 2], depth: u32, out: &mut Vec<[[f64; 2]; 3]>) {
        if depth == 0 {
            out.push([a, b, c]);
            return;
        }
        let mid = |p: [f64; 2], q: [f64; 2]| [(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0];
        let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
        recurse(a, ab, ca, depth - 1, out);
        recurse(ab, b, bc, depth - 1, out);
        recurse(ca, bc, c, depth - 1, out);
    }
    let mut leaves = Vec::new();
    recurse([0.0, 0.0], [1.0, 0.0], [0.5, 1.0], depth, &mut leaves);
    let span = (n - 3) as f64;
    let px = |v: f64| ((1.0 + v * span).round() as usize).clamp(1, n - 2);
    let mut m = MaskBuffer::zeros(n, n);
    let samples = 16;
    for tri in leaves {
        for k in 0..3 {
            let (p, q) = (tri[k], tri[(k + 1) % 3]);
            for s in 0..=samples {
                let t = s as f64 / samples as f64;
                m.set(px(p[0] + t * (q[0] - p[0])), px(p[1] + t * (q[1] - p[1])), true);
            }
        }
    }
    m
}

/// `(wins + ties / 2) / (P * N)` by explicit pair enumeration.
pub fn pairwise_auroc(samples: &[(f64, bool)]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for &(ps, _) in samples.iter().filter(|s| s.1) {
        for &(ns, _) in samples.iter().filter(|s| !s.1) {
            den += 1.0;
            num += match ps.partial_cmp(&ns).unwrap() {
                Ordering::Greater => 1.0,
                Ordering::Equal => 0.5,
                Ordering::Less => 0.0,
            };
        }
    }
    num / den
}

/// SHA-256 over every file under `root`: relative path then contents, in
/// sorted path order.
pub fn hash_tree(root: &Path) -> String {
    fn walk(dir: &Path, out: &mut Vec<std::path::PathBuf>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, out);
            } else {
                out.push(p);
            }
        }
    }
    let mut files = Vec::new();
    walk(root, &mut files);
    files.sort();
    let mut hasher = Sha256::new();
    for f in files {
        hasher.update(f.strip_prefix(root).unwrap().to_string_lossy().as_bytes());
        hasher.update([0]);
        hasher.update(fs::read(&f).unwrap());
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Textured image: smooth colour gradient, stripes and per-pixel noise.
pub fn textured(w: usize, h: usize, seed: u64) -> ImageBuffer {
    let mut r = rng(seed);
    let base: [f64; 3] = [r.random_range(40.0..200.0), r.random_range(40.0..200.0), r.random_range(40.0..200.0)];
    let period = r.random_range(5.0..20.0);
    ImageBuffer::from_fn(w, h, |x, y| {
        let stripe = 25.0 * ((x as f64 + 0.5 * y as f64) / period).sin();
        let grad = 30.0 * y as f64 / h as f64;
        let noise = r.random_range(-10.0..10.0);
        base.map(|b| (b + stripe + grad + noise).round().clamp(0.0, 255.0) as u8)
    })
}

/// Writes `count` textured PNGs into `dir`.
pub fn write_normals(dir: &Path, count: usize, size: usize, seed: u64) {
    fs::create_dir_all(dir).unwrap();
    for k in 0..count {
        save_rgb(&dir.join(format!("normal_{k:03}.png")), &textured(size, size, seed + k as u64)).unwrap();
    }
}
