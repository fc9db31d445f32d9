use super::Image;
use crate::error::{Error, Result};

/// Normalized `kernel x kernel` box filter with edge replication. Alpha is
/// filtered the same way.
pub fn blur(img: &Image, kernel: usize) -> Result<Image> {
    if kernel == 0 || kernel.is_multiple_of(2) {
        return Err(Error::input(format!("blur kernel must be odd and positive, got {kernel}")));
    }
    if kernel > img.height().min(img.width()) {
        return Err(Error::input(format!(
            "blur kernel {kernel} exceeds image size {}x{}",
            img.height(),
            img.width()
        )));
    }
    if kernel == 1 {
        return Ok(img.clone());
    }
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    let pixels = box_filter(img.pixels(), h, w, ch, kernel);
    let alpha = img.alpha().map(|a| box_filter(a, h, w, 1, kernel));
    Ok(Image::from_clamped(h, w, ch, pixels, alpha))
}

/// Separable box filter; the two passes accumulate in f64.
fn box_filter(src: &[f32], h: usize, w: usize, ch: usize, k: usize) -> Vec<f32> {
    let r = (k / 2) as isize;
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut rows = vec![0.0f64; h * w * ch];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut s = 0.0;
                for d in -r..=r {
                    s += src[(y * w + clampi(x as isize + d, w)) * ch + c] as f64;
                }
                rows[(y * w + x) * ch + c] = s;
            }
        }
    }
    let norm = (k * k) as f64;
    let mut out = vec![0.0f32; h * w * ch];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut s = 0.0;
                for d in -r..=r {
                    s += rows[(clampi(y as isize + d, h) * w + x) * ch + c];
                }
                out[(y * w + x) * ch + c] = (s / norm) as f32;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_one_and_constant_are_identity() {
        let img = Image::new(3, 4, 1, (0..12).map(|i| i as f32 / 11.0).collect(), None).unwrap();
        assert_eq!(blur(&img, 1).unwrap(), img);
        let flat = Image::filled(6, 6, 3, 0.3).unwrap();
        let out = blur(&flat, 5).unwrap();
        assert!(out.pixels().iter().all(|v| (v - 0.3).abs() < 1e-6));
    }

    #[test]
    fn impulse_spreads_to_ninths() {
        let mut px = vec![0.0; 49];
        px[3 * 7 + 3] = 1.0;
        let out = blur(&Image::new(7, 7, 1, px, None).unwrap(), 3).unwrap();
        for y in 0..7 {
            for x in 0..7 {
                let inside = (2..=4).contains(&y) && (2..=4).contains(&x);
                let want = if inside { 1.0 / 9.0 } else { 0.0 };
                assert!((out.pixel(y, x, 0) - want).abs() < 1e-7, "({y},{x})");
            }
        }
        assert!((out.mean() - 1.0 / 49.0).abs() < 1e-7);
    }

    #[test]
    fn rejects_bad_kernels() {
        let img = Image::filled(4, 4, 1, 0.5).unwrap();
        assert!(blur(&img, 2).is_err());
        assert!(blur(&img, 0).is_err());
        assert!(blur(&img, 5).is_err());
    }
}
