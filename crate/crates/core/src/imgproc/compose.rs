use super::{ensure_dims, ImageBuffer, MaskBuffer};
use crate::error::{Error, Result};

/// Pixelwise conjunction of two masks.
pub fn mask_and(a: &MaskBuffer, b: &MaskBuffer) -> Result<MaskBuffer> {
    ensure_dims(a.dims(), b.dims())?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x & y).collect();
    MaskBuffer::from_raw(a.width(), a.height(), data)
}

/// Keeps image pixels under set mask pixels and zeroes the rest.
pub fn apply_mask(image: &ImageBuffer, mask: &MaskBuffer) -> Result<ImageBuffer> {
    ensure_dims(image.dims(), mask.dims())?;
    let data = image
        .data()
        .chunks_exact(3)
        .zip(mask.data())
        .flat_map(|(px, &m)| if m != 0 { [px[0], px[1], px[2]] } else { [0, 0, 0] })
        .collect();
    ImageBuffer::from_raw(image.width(), image.height(), data)
}

/// Copies `patch` pixels under set `mask` pixels onto `base` with the patch's
/// top-left corner at `position`. All other base pixels are untouched.
pub fn paste(base: &ImageBuffer, patch: &ImageBuffer, mask: &MaskBuffer, position: (usize, usize)) -> Result<ImageBuffer> {
    ensure_dims(patch.dims(), mask.dims())?;
    let (px, py) = position;
    if px + patch.width() > base.width() || py + patch.height() > base.height() {
        return Err(Error::OutOfBounds(format!(
            "{}x{} patch at ({px},{py}) exceeds {}x{} base",
            patch.width(),
            patch.height(),
            base.width(),
            base.height()
        )));
    }
    let mut out = base.clone();
    for y in 0..patch.height() {
        for x in 0..patch.width() {
            if mask.get(x, y) {
                out.set(px + x, py + y, patch.get(x, y));
            }
        }
    }
    Ok(out)
}
