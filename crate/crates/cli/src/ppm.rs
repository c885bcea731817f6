//! Frame-grid image: all frames side by side in one binary PPM (P6).

use fulldit::tokenizer::VideoTensor;

/// Frames `F × H × W × 3` in `[0, 1]` laid out left to right as an
/// `H × (F·W)` 8-bit image; values are clamped and rounded.
pub fn frame_grid_ppm(video: &VideoTensor) -> Vec<u8> {
    let (f, h, w, _) = video.dim();
    let mut out = format!("P6\n{} {h}\n255\n", f * w).into_bytes();
    out.reserve(f * h * w * 3);
    for y in 0..h {
        for t in 0..f {
            for x in 0..w {
                for c in 0..3 {
                    out.push((video[[t, y, x, c]].clamp(0.0, 1.0) * 255.0).round() as u8);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;

    #[test]
    fn layout_and_quantization() {
        let mut v = Array4::<f32>::zeros((2, 1, 2, 3));
        v[[0, 0, 1, 0]] = 1.0;
        v[[1, 0, 0, 1]] = 0.5;
        v[[1, 0, 1, 2]] = 7.0;
        let img = frame_grid_ppm(&v);
        let header = b"P6\n4 1\n255\n";
        assert_eq!(&img[..header.len()], header);
        assert_eq!(
            &img[header.len()..],
            &[0, 0, 0, 255, 0, 0, 0, 128, 0, 0, 0, 255]
        );
    }
}
