use super::{ImageBuffer, MaskBuffer};

/// Rounded ITU-R 601 luma.
pub fn luma([r, g, b]: [u8; 3]) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64).round() as u8
}

#[derive(Debug, Clone, PartialEq)]
pub struct OtsuResult {
    pub mask: MaskBuffer,
    /// Pixels with luma `<= threshold` form the lower class.
    pub threshold: u8,
    /// Set when no threshold separates the histogram (single-valued image);
    /// the mask is then all ones.
    pub degenerate: bool,
}

/// Otsu object mask. The foreground is whichever class has its mean farther
/// from the global mean (the brighter class on ties).
pub fn otsu_threshold(image: &ImageBuffer) -> OtsuResult {
    let (w, h) = image.dims();
    let lumas: Vec<u8> = image.data().chunks_exact(3).map(|c| luma([c[0], c[1], c[2]])).collect();
    let mut hist = [0u64; 256];
    for &l in &lumas {
        hist[l as usize] += 1;
    }
    let total = lumas.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();

    let mut best = (0.0f64, 0u8);
    let mut w0 = 0.0;
    let mut sum0 = 0.0;
    for t in 0..255usize {
        w0 += hist[t] as f64;
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = (w0 / total) * (w1 / total) * (m0 - m1).powi(2);
        if between > best.0 {
            best = (between, t as u8);
        }
    }

    if best.0 <= 0.0 {
        return OtsuResult { mask: MaskBuffer::ones(w, h), threshold: 255, degenerate: true };
    }
    let t = best.1;
    let global = sum_all / total;
    let (mut n0, mut s0) = (0.0, 0.0);
    for (i, &c) in hist.iter().enumerate().take(t as usize + 1) {
        n0 += c as f64;
        s0 += i as f64 * c as f64;
    }
    let m0 = s0 / n0;
    let m1 = (sum_all - s0) / (total - n0);
    let upper_is_fg = (m1 - global).abs() >= (m0 - global).abs();
    let data = lumas.iter().map(|&l| ((l > t) == upper_is_fg) as u8).collect();
    OtsuResult {
        mask: MaskBuffer::from_raw(w, h, data).expect("dimensions preserved"),
        threshold: t,
        degenerate: false,
    }
}
