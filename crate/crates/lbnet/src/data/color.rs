//! BT.601 luma conversion for metric computation.

use super::Image;

/// Luma of one RGB sample (components in `[0,1]`), on the studio-swing
/// 8-bit scale: black → 16, white → 235.
pub fn rgb_to_y(r: f64, g: f64, b: f64) -> f64 {
    16.0 + 65.481 * r + 128.553 * g + 24.966 * b
}

/// Luma plane of an image, in `[16, 235]`.
pub fn y_plane(img: &Image) -> Vec<f64> {
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    r.iter().zip(g).zip(b).map(|((&r, &g), &b)| rgb_to_y(r, g, b)).collect()
}
