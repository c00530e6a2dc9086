//! Deterministic fixtures shared by the benchmarks.

use usadapt::imaging::Image;

/// Smooth pseudo-random test pattern in `[0, 1]`.
pub fn pattern(height: usize, width: usize, phase: f64) -> Image {
    Image::from_fn(height, width, |y, x| {
        let v = (y as f64 * 0.37 + phase).sin() * (x as f64 * 0.23 - phase).cos();
        0.5 + 0.45 * v
    })
    .expect("valid size")
}
