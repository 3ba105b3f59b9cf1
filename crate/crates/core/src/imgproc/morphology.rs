use super::MaskBuffer;

/// Binary dilation by a 3×3 all-ones kernel, repeated `iterations` times.
/// Pixels beyond the border count as unset.
pub fn dilate(mask: &MaskBuffer, iterations: usize) -> MaskBuffer {
    let (w, h) = mask.dims();
    let mut cur = mask.data().to_vec();
    let mut rows = vec![0u8; w * h];
    for _ in 0..iterations {
        // The 3×3 box is separable: horizontal max then vertical max.
        for y in 0..h {
            let row = &cur[y * w..(y + 1) * w];
            for x in 0..w {
                let lo = x.saturating_sub(1);
                let hi = (x + 1).min(w - 1);
                rows[y * w + x] = row[lo..=hi].iter().copied().max().unwrap_or(0);
            }
        }
        for y in 0..h {
            let lo = y.saturating_sub(1);
            let hi = (y + 1).min(h - 1);
            for x in 0..w {
                cur[y * w + x] = (lo..=hi).map(|yy| rows[yy * w + x]).max().unwrap_or(0);
            }
        }
    }
    MaskBuffer::from_raw(w, h, cur).expect("dimensions preserved")
}
