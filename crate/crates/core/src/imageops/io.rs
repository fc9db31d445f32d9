use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, LumaA, Rgb, Rgba};

use super::Image;
use crate::error::{Error, Result};

/// `round(v * 255)` with `v` already in `[0, 1]`.
pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn from_u8(v: u8) -> f32 {
    v as f32 / 255.0
}

/// Reads an 8-bit or 16-bit PNG/PNM. Gray and RGB stay as 1 and 3 channels,
/// an alpha channel becomes straight alpha.
pub fn load_png(path: &Path) -> Result<Image> {
    let dynimg = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(format!("{}: {other}", path.display())),
    })?;
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    let color = dynimg.color();
    let (channels, has_alpha) = (if color.has_color() { 3 } else { 1 }, color.has_alpha());
    let (pixels, alpha): (Vec<f32>, Option<Vec<f32>>) = match (channels, has_alpha) {
        (1, false) => (dynimg.to_luma8().into_raw().into_iter().map(from_u8).collect(), None),
        (3, false) => (dynimg.to_rgb8().into_raw().into_iter().map(from_u8).collect(), None),
        (1, true) => {
            let raw = dynimg.to_luma_alpha8().into_raw();
            (raw.iter().step_by(2).map(|&v| from_u8(v)).collect(), Some(raw.iter().skip(1).step_by(2).map(|&v| from_u8(v)).collect()))
        }
        _ => {
            let raw = dynimg.to_rgba8().into_raw();
            let px = raw.chunks(4).flat_map(|p| p[..3].iter().map(|&v| from_u8(v))).collect();
            (px, Some(raw.chunks(4).map(|p| from_u8(p[3])).collect()))
        }
    };
    Image::new(h, w, channels, pixels, alpha).map_err(|e| Error::format(format!("{}: {e}", path.display())))
}

/// Writes an 8-bit PNG (gray, gray+alpha, RGB or RGBA).
pub fn save_png(img: &Image, path: &Path) -> Result<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let px: Vec<u8> = img.pixels().iter().map(|&v| to_u8(v)).collect();
    let buffer_err = || Error::input("pixel buffer does not match image size");
    let dynimg = match (img.channels(), img.alpha()) {
        (1, None) => DynamicImage::ImageLuma8(ImageBuffer::<Luma<u8>, _>::from_raw(w, h, px).ok_or_else(buffer_err)?),
        (3, None) => DynamicImage::ImageRgb8(ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, px).ok_or_else(buffer_err)?),
        (1, Some(a)) => {
            let raw = px.iter().zip(a).flat_map(|(&v, &a)| [v, to_u8(a)]).collect();
            DynamicImage::ImageLumaA8(ImageBuffer::<LumaA<u8>, _>::from_raw(w, h, raw).ok_or_else(buffer_err)?)
        }
        (_, Some(a)) => {
            let raw = px.chunks(3).zip(a).flat_map(|(p, &a)| [p[0], p[1], p[2], to_u8(a)]).collect();
            DynamicImage::ImageRgba8(ImageBuffer::<Rgba<u8>, _>::from_raw(w, h, raw).ok_or_else(buffer_err)?)
        }
        (c, None) => return Err(Error::input(format!("cannot save {c}-channel image"))),
    };
    dynimg.save_with_format(path, image::ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format(format!("{}: {other}", path.display())),
    })
}
