use rand::Rng;

use super::Image;
use crate::error::{Error, Result};

/// Closed ranges for the photometric jitter. Brightness, contrast and
/// saturation are multiplicative factors; hue is a shift in turns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterRanges {
    pub brightness: (f64, f64),
    pub contrast: (f64, f64),
    pub saturation: (f64, f64),
    pub hue: (f64, f64),
}

impl JitterRanges {
    pub const IDENTITY: JitterRanges =
        JitterRanges { brightness: (1.0, 1.0), contrast: (1.0, 1.0), saturation: (1.0, 1.0), hue: (0.0, 0.0) };

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in
            [("brightness", self.brightness), ("contrast", self.contrast), ("saturation", self.saturation)]
        {
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
                return Err(Error::input(format!("{name} range [{lo}, {hi}] must be ordered and non-negative")));
            }
        }
        let (lo, hi) = self.hue;
        if !(-0.5 <= lo && lo <= hi && hi <= 0.5) {
            return Err(Error::input(format!("hue range [{lo}, {hi}] must be ordered within [-0.5, 0.5]")));
        }
        Ok(())
    }
}

fn draw<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

fn luma(px: &[f32]) -> f32 {
    if px.len() == 3 {
        0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]
    } else {
        px[0]
    }
}

/// Brightness, contrast, saturation, then hue, each factor drawn from its
/// range. Saturation and hue do nothing on single-channel images. Factors
/// at their neutral value are skipped so a collapsed range is exact.
pub fn color_jitter<R: Rng + ?Sized>(img: &Image, ranges: &JitterRanges, rng: &mut R) -> Result<Image> {
    ranges.validate()?;
    let b = draw(rng, ranges.brightness) as f32;
    let c = draw(rng, ranges.contrast) as f32;
    let s = draw(rng, ranges.saturation) as f32;
    let h = draw(rng, ranges.hue) as f32;
    let ch = img.channels();
    let mut px = img.pixels().to_vec();
    if b != 1.0 {
        px.iter_mut().for_each(|v| *v = (*v * b).clamp(0.0, 1.0));
    }
    if c != 1.0 {
        let mean = px.chunks(ch).map(|p| luma(p) as f64).sum::<f64>() as f32 / (px.len() / ch) as f32;
        px.iter_mut().for_each(|v| *v = (mean + (*v - mean) * c).clamp(0.0, 1.0));
    }
    if ch == 3 && s != 1.0 {
        for p in px.chunks_mut(3) {
            let g = luma(p);
            p.iter_mut().for_each(|v| *v = (g + (*v - g) * s).clamp(0.0, 1.0));
        }
    }
    if ch == 3 && h != 0.0 {
        for p in px.chunks_mut(3) {
            let (hh, ss, vv) = rgb_to_hsv(p[0], p[1], p[2]);
            let (r, g, bl) = hsv_to_rgb((hh + h).rem_euclid(1.0), ss, vv);
            p.copy_from_slice(&[r, g, bl]);
        }
    }
    Ok(Image::from_clamped(img.height(), img.width(), ch, px, img.alpha().map(<[f32]>::to_vec)))
}

/// Multiplies every channel by `factor` and clamps.
pub fn exposure_adjust(img: &Image, factor: f64) -> Result<Image> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::input(format!("exposure factor must be positive, got {factor}")));
    }
    if factor == 1.0 {
        return Ok(img.clone());
    }
    let f = factor as f32;
    let px = img.pixels().iter().map(|v| v * f).collect();
    Ok(Image::from_clamped(img.height(), img.width(), img.channels(), px, img.alpha().map(<[f32]>::to_vec)))
}

fn rgb_to_hsv(r: f32, g: f32, b: f32) -> (f32, f32, f32) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / d).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    (h, s, max)
}

fn hsv_to_rgb(h: f32, s: f32, v: f32) -> (f32, f32, f32) {
    let h6 = h * 6.0;
    let sector = h6.floor();
    let f = h6 - sector;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match sector as i32 % 6 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}
