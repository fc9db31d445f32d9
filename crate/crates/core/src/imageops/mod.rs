//! Float images in `[0, 1]` and the transforms used to render objects and
//! composite them onto contexts.

mod color;
mod composite;
mod filter;
mod io;
mod warp;

pub use color::{color_jitter, exposure_adjust, JitterRanges};
pub use composite::{composite, uniform_noise_image};
pub use filter::blur;
pub use io::{load_png, save_png, to_u8};
pub use warp::{affine_warp, perspective_warp, resize, Affine};

use crate::error::{Error, Result};

/// Height x width x channels image, interleaved, with optional straight alpha.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f32>,
    alpha: Option<Vec<f32>>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f32>, alpha: Option<Vec<f32>>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::input(format!("image dimensions must be positive, got {height}x{width}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::input(format!("images have 1 or 3 channels, got {channels}")));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::input(format!(
                "{height}x{width}x{channels} image needs {} pixel values, got {}",
                height * width * channels,
                pixels.len()
            )));
        }
        if let Some(a) = &alpha {
            if a.len() != height * width {
                return Err(Error::input(format!("alpha has {} values for a {height}x{width} image", a.len())));
            }
        }
        let in_range = |v: &f32| (0.0..=1.0).contains(v);
        if !pixels.iter().all(in_range) || !alpha.iter().flatten().all(in_range) {
            return Err(Error::input("image values must lie in [0, 1]"));
        }
        Ok(Self { height, width, channels, pixels, alpha })
    }

    /// Constant image without alpha.
    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels], None)
    }

    /// Builds an image from values that may stray outside `[0, 1]`, clamping them.
    pub(crate) fn from_clamped(height: usize, width: usize, channels: usize, mut pixels: Vec<f32>, alpha: Option<Vec<f32>>) -> Self {
        for v in pixels.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        let alpha = alpha.map(|mut a| {
            a.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
            a
        });
        Self { height, width, channels, pixels, alpha }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn alpha(&self) -> Option<&[f32]> {
        self.alpha.as_deref()
    }

    pub fn with_alpha(mut self, alpha: Option<Vec<f32>>) -> Result<Self> {
        if let Some(a) = &alpha {
            if a.len() != self.height * self.width || !a.iter().all(|v| (0.0..=1.0).contains(v)) {
                return Err(Error::input("alpha must be H x W values in [0, 1]"));
            }
        }
        self.alpha = alpha;
        Ok(self)
    }

    pub fn without_alpha(mut self) -> Self {
        self.alpha = None;
        self
    }

    pub fn pixel(&self, y: usize, x: usize, c: usize) -> f32 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Binary foreground mask `alpha > 0.5`; all-false without alpha.
    pub fn mask(&self) -> Vec<bool> {
        match &self.alpha {
            Some(a) => a.iter().map(|&v| v > 0.5).collect(),
            None => vec![false; self.height * self.width],
        }
    }

    /// Channel `c` as its own single-channel image (alpha kept).
    pub fn channel(&self, c: usize) -> Image {
        let pixels = self.pixels.iter().skip(c).step_by(self.channels).copied().collect();
        Image { height: self.height, width: self.width, channels: 1, pixels, alpha: self.alpha.clone() }
    }

    /// Planar `[channels, height, width]` copy of the pixels.
    pub fn to_chw(&self) -> Vec<f32> {
        let plane = self.height * self.width;
        let mut out = vec![0.0; plane * self.channels];
        for (i, px) in self.pixels.chunks(self.channels).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                out[c * plane + i] = v;
            }
        }
        out
    }

    /// Inverse of [`Image::to_chw`]; values are clamped into `[0, 1]`.
    pub fn from_chw(height: usize, width: usize, channels: usize, planar: &[f32]) -> Result<Image> {
        if height == 0 || width == 0 || (channels != 1 && channels != 3) || planar.len() != height * width * channels {
            return Err(Error::input("planar buffer does not match image dimensions"));
        }
        let pixels = planar_to_interleaved(planar, height, width, channels);
        Ok(Image::from_clamped(height, width, channels, pixels, None))
    }

    /// Converts between gray and RGB (luma weights 0.299, 0.587, 0.114).
    pub fn to_channels(&self, channels: usize) -> Result<Image> {
        match (self.channels, channels) {
            (a, b) if a == b => Ok(self.clone()),
            (3, 1) => {
                let pixels = self.pixels.chunks(3).map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).collect();
                Ok(Image::from_clamped(self.height, self.width, 1, pixels, self.alpha.clone()))
            }
            (1, 3) => {
                let pixels = self.pixels.iter().flat_map(|&v| [v, v, v]).collect();
                Ok(Image { height: self.height, width: self.width, channels: 3, pixels, alpha: self.alpha.clone() })
            }
            (_, c) => Err(Error::input(format!("cannot convert to {c} channels"))),
        }
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|&v| v as f64).sum::<f64>() / self.pixels.len() as f64
    }
}

fn planar_to_interleaved(planar: &[f32], height: usize, width: usize, channels: usize) -> Vec<f32> {
    let plane = height * width;
    let mut pixels = vec![0.0; plane * channels];
    for c in 0..channels {
        for i in 0..plane {
            pixels[i * channels + c] = planar[c * plane + i];
        }
    }
    pixels
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_validates() {
        assert!(Image::new(2, 2, 1, vec![0.5; 4], None).is_ok());
        assert!(Image::new(2, 2, 2, vec![0.5; 8], None).is_err());
        assert!(Image::new(2, 2, 1, vec![1.5; 4], None).is_err());
        assert!(Image::new(2, 2, 1, vec![0.5; 4], Some(vec![0.5; 3])).is_err());
        assert!(Image::new(0, 2, 1, vec![], None).is_err());
    }

    #[test]
    fn channel_conversion() {
        let gray = Image::new(1, 2, 1, vec![0.2, 0.8], Some(vec![1.0, 0.0])).unwrap();
        let rgb = gray.to_channels(3).unwrap();
        assert_eq!(rgb.pixels(), &[0.2, 0.2, 0.2, 0.8, 0.8, 0.8]);
        let back = rgb.to_channels(1).unwrap();
        for (a, b) in back.pixels().iter().zip(gray.pixels()) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(back.alpha(), gray.alpha());
        assert!(gray.to_channels(2).is_err());
    }

    #[test]
    fn chw_round_trip() {
        let px: Vec<f32> = (0..12).map(|i| i as f32 / 12.0).collect();
        let img = Image::new(2, 2, 3, px, None).unwrap();
        let chw = img.to_chw();
        assert_eq!(chw[0..4], [0.0, 3.0 / 12.0, 6.0 / 12.0, 9.0 / 12.0]);
        assert_eq!(Image::from_chw(2, 2, 3, &chw).unwrap(), img);
    }
}
