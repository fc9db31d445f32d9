use std::path::Path;

use super::{DataSource, TestSet};
use crate::error::{Error, Result};
use crate::imageops::Image;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Raw contents of an IDX image file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::format(format!("IDX {what} truncated in header at byte {at}")))
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = be_u32(bytes, 0, "images")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::format(format!("IDX images magic is {magic:#010x}, expected {IMAGES_MAGIC:#010x}")));
    }
    let count = be_u32(bytes, 4, "images")? as usize;
    let rows = be_u32(bytes, 8, "images")? as usize;
    let cols = be_u32(bytes, 12, "images")? as usize;
    let need = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::format("IDX image dimensions overflow"))?;
    let payload = &bytes[16..];
    if payload.len() != need {
        return Err(Error::format(format!(
            "IDX images: header promises {count}x{rows}x{cols} = {need} bytes, file has {}",
            payload.len()
        )));
    }
    if need > 0 && (rows == 0 || cols == 0) {
        return Err(Error::format("IDX images have a zero dimension"));
    }
    Ok(IdxImages { count, rows, cols, pixels: payload.to_vec() })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, "labels")?;
    if magic != LABELS_MAGIC {
        return Err(Error::format(format!("IDX labels magic is {magic:#010x}, expected {LABELS_MAGIC:#010x}")));
    }
    let count = be_u32(bytes, 4, "labels")? as usize;
    let payload = &bytes[8..];
    if payload.len() != count {
        return Err(Error::format(format!("IDX labels: header promises {count} bytes, file has {}", payload.len())));
    }
    Ok(payload.to_vec())
}

/// Loads an IDX image/label pair as a 10-class grayscale set.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<TestSet> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| Error::missing("MNIST file", p, e));
    let imgs = parse_idx_images(&read(images_path)?).map_err(|e| annotate(e, images_path))?;
    let labels = parse_idx_labels(&read(labels_path)?).map_err(|e| annotate(e, labels_path))?;
    if imgs.count != labels.len() {
        return Err(Error::dataset(format!(
            "{} holds {} images but {} holds {} labels",
            images_path.display(),
            imgs.count,
            labels_path.display(),
            labels.len()
        )));
    }
    if imgs.count == 0 {
        return Err(Error::dataset(format!("{} holds no images", images_path.display())));
    }
    let plane = imgs.rows * imgs.cols;
    let images = imgs
        .pixels
        .chunks(plane)
        .map(|raw| Image::new(imgs.rows, imgs.cols, 1, raw.iter().map(|&v| v as f32 / 255.0).collect(), None))
        .collect::<Result<Vec<_>>>()?;
    TestSet::new(images, labels.into_iter().map(usize::from).collect(), DataSource::Mnist, 10)
}

fn annotate(e: Error, path: &Path) -> Error {
    match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    }
}
