//! Geometric warps with bilinear sampling.
//!
//! Pixel centers sit at integer coordinates and the warp center is
//! `((w - 1) / 2, (h - 1) / 2)`. Source reads outside the image produce the
//! fill value for pixels and 0 for alpha.

use rand::Rng;

use super::Image;
use crate::error::{Error, Result};

/// Parameters of one affine warp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    /// Counter-clockwise rotation in degrees.
    pub rotation: f64,
    /// Translation as a fraction of (width, height).
    pub translate: (f64, f64),
    pub scale: f64,
    /// Horizontal shear in degrees.
    pub shear: f64,
}

impl Affine {
    pub const IDENTITY: Affine = Affine { rotation: 0.0, translate: (0.0, 0.0), scale: 1.0, shear: 0.0 };

    fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }
}

/// Maps output coordinates to source coordinates.
trait SourceMap {
    fn source(&self, x: f64, y: f64) -> Option<(f64, f64)>;
}

struct InverseAffine {
    m: [f64; 6],
}

impl SourceMap for InverseAffine {
    fn source(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let m = &self.m;
        Some((m[0] * x + m[1] * y + m[2], m[3] * x + m[4] * y + m[5]))
    }
}

struct Homography {
    h: [f64; 9],
}

impl SourceMap for Homography {
    fn source(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let h = &self.h;
        let d = h[6] * x + h[7] * y + h[8];
        if d.abs() < 1e-12 {
            return None;
        }
        Some(((h[0] * x + h[1] * y + h[2]) / d, (h[3] * x + h[4] * y + h[5]) / d))
    }
}

fn resample(img: &Image, map: &impl SourceMap, fill: f32) -> Image {
    let (h, w, ch) = (img.height(), img.width(), img.channels());
    let src = img.pixels();
    let src_alpha = img.alpha();
    let mut pixels = vec![0.0f32; h * w * ch];
    let mut alpha = src_alpha.map(|_| vec![0.0f32; h * w]);
    let mut acc = [0.0f64; 3];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let Some((sx, sy)) = map.source(x as f64, y as f64) else {
                pixels[i * ch..(i + 1) * ch].fill(fill);
                continue;
            };
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let taps = [
                (x0, y0, (1.0 - fx) * (1.0 - fy)),
                (x0 + 1.0, y0, fx * (1.0 - fy)),
                (x0, y0 + 1.0, (1.0 - fx) * fy),
                (x0 + 1.0, y0 + 1.0, fx * fy),
            ];
            acc[..ch].fill(0.0);
            let mut a_acc = 0.0f64;
            for (tx, ty, wt) in taps {
                if wt == 0.0 {
                    continue;
                }
                let inside = tx >= 0.0 && ty >= 0.0 && tx < w as f64 && ty < h as f64;
                if inside {
                    let j = ty as usize * w + tx as usize;
                    for c in 0..ch {
                        acc[c] += wt * src[j * ch + c] as f64;
                    }
                    if let Some(sa) = src_alpha {
                        a_acc += wt * sa[j] as f64;
                    }
                } else {
                    for a in acc.iter_mut().take(ch) {
                        *a += wt * fill as f64;
                    }
                }
            }
            for c in 0..ch {
                pixels[i * ch + c] = acc[c] as f32;
            }
            if let Some(a) = alpha.as_mut() {
                a[i] = a_acc as f32;
            }
        }
    }
    Image::from_clamped(h, w, ch, pixels, alpha)
}

/// Rotation, translation, scale and shear about the image center.
pub fn affine_warp(img: &Image, params: &Affine, fill: f32) -> Result<Image> {
    if !(params.scale > 0.0) || !params.scale.is_finite() {
        return Err(Error::input(format!("affine scale must be positive, got {}", params.scale)));
    }
    if params.is_identity() {
        return Ok(img.clone());
    }
    let (cx, cy) = ((img.width() as f64 - 1.0) / 2.0, (img.height() as f64 - 1.0) / 2.0);
    let (tx, ty) = (params.translate.0 * img.width() as f64, params.translate.1 * img.height() as f64);
    let (sin, cos) = params.rotation.to_radians().sin_cos();
    let sh = params.shear.to_radians().tan();
    // forward linear part L = R * Shear * scale; in image coordinates (y down)
    // a counter-clockwise turn uses -sin in the lower left.
    let s = params.scale;
    let l = [cos * s, (cos * sh + sin) * s, -sin * s, (-sin * sh + cos) * s];
    let det = l[0] * l[3] - l[1] * l[2];
    let inv = [l[3] / det, -l[1] / det, -l[2] / det, l[0] / det];
    // src = L^-1 (dst - c - t) + c
    let (ox, oy) = (cx + tx, cy + ty);
    let m = [
        inv[0],
        inv[1],
        cx - inv[0] * ox - inv[1] * oy,
        inv[2],
        inv[3],
        cy - inv[2] * ox - inv[3] * oy,
    ];
    Ok(resample(img, &InverseAffine { m }, fill))
}

/// Solves for the homography taking each `from[i]` to `to[i]`.
fn homography(from: &[(f64, f64); 4], to: &[(f64, f64); 4]) -> Option<[f64; 9]> {
    let mut a = [[0.0f64; 9]; 8];
    for i in 0..4 {
        let (x, y) = from[i];
        let (u, v) = to[i];
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, u];
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, v];
    }
    // Gaussian elimination with partial pivoting on the 8x8 system.
    for col in 0..8 {
        let pivot = (col..8).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        for row in 0..8 {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..9 {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    let mut h = [0.0; 9];
    for i in 0..8 {
        h[i] = a[i][8] / a[i][i];
    }
    h[8] = 1.0;
    Some(h)
}

/// Warps the image so its corners land on `corners` (top-left, top-right,
/// bottom-right, bottom-left).
pub(crate) fn warp_to_corners(img: &Image, corners: &[(f64, f64); 4], fill: f32) -> Result<Image> {
    let (w, h) = (img.width() as f64 - 1.0, img.height() as f64 - 1.0);
    let original = [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)];
    let hm = homography(corners, &original)
        .ok_or_else(|| Error::input("perspective corners are degenerate"))?;
    Ok(resample(img, &Homography { h: hm }, fill))
}

/// Four-corner perspective warp; each corner coordinate moves independently
/// by up to `distortion * min(h, w)` pixels.
pub fn perspective_warp<R: Rng + ?Sized>(img: &Image, distortion: f64, rng: &mut R) -> Result<Image> {
    if !(0.0..0.5).contains(&distortion) {
        return Err(Error::input(format!("perspective distortion must be in [0, 0.5), got {distortion}")));
    }
    if distortion == 0.0 {
        return Ok(img.clone());
    }
    let reach = distortion * img.height().min(img.width()) as f64;
    let (w, h) = (img.width() as f64 - 1.0, img.height() as f64 - 1.0);
    let mut corners = [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)];
    for c in corners.iter_mut() {
        c.0 += rng.gen_range(-reach..=reach);
        c.1 += rng.gen_range(-reach..=reach);
    }
    warp_to_corners(img, &corners, 0.0)
}

/// Bilinear (triangle filter) resize; downscaling widens the filter so it
/// averages rather than aliases.
pub fn resize(img: &Image, height: usize, width: usize) -> Result<Image> {
    use image::imageops::{self, FilterType};
    use image::{ImageBuffer, Luma};
    if height == 0 || width == 0 {
        return Err(Error::input(format!("resize target must be positive, got {height}x{width}")));
    }
    if img.height() == height && img.width() == width {
        return Ok(img.clone());
    }
    let (sw, sh) = (img.width() as u32, img.height() as u32);
    let plane = |values: Vec<f32>| -> Vec<f32> {
        let buf = ImageBuffer::<Luma<f32>, _>::from_raw(sw, sh, values).expect("plane matches image size");
        imageops::resize(&buf, width as u32, height as u32, FilterType::Triangle).into_raw()
    };
    let ch = img.channels();
    let planes: Vec<Vec<f32>> = (0..ch).map(|c| plane(img.channel(c).pixels().to_vec())).collect();
    let mut pixels = vec![0.0f32; height * width * ch];
    for (c, p) in planes.iter().enumerate() {
        for (i, &v) in p.iter().enumerate() {
            pixels[i * ch + c] = v;
        }
    }
    let alpha = img.alpha().map(|a| plane(a.to_vec()));
    Ok(Image::from_clamped(height, width, ch, pixels, alpha))
}
