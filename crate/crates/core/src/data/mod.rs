//! Evaluation sets: the real MNIST and GTSRB test splits and frozen
//! synthetic validation sets.

mod gtsrb;
mod idx;
mod synthetic;

pub use gtsrb::{load_gtsrb_test, GTSRB_CLASSES};
pub use idx::{load_mnist_idx, parse_idx_images, parse_idx_labels, IdxImages};
pub use synthetic::build_synthetic_testset;

use crate::error::{Error, Result};
use crate::imageops::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Mnist,
    Gtsrb,
    Synthetic,
}

/// Labeled images that all share one shape.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSet {
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
    pub source: DataSource,
    pub classes: usize,
}

impl TestSet {
    pub fn new(images: Vec<Image>, labels: Vec<usize>, source: DataSource, classes: usize) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::dataset(format!("{} images but {} labels", images.len(), labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::dataset(format!("label {bad} outside [0, {classes})")));
        }
        if let Some(first) = images.first() {
            if let Some(i) = images.iter().position(|im| !im.same_shape(first)) {
                return Err(Error::dataset(format!("image {i} differs in shape from image 0")));
            }
        }
        Ok(Self { images, labels, source, classes })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// `[channels, height, width]` of the images, if any.
    pub fn dims(&self) -> Option<[usize; 3]> {
        self.images.first().map(|i| [i.channels(), i.height(), i.width()])
    }

    /// Planar batch of the images in `range`.
    pub fn planar_batch(&self, range: std::ops::Range<usize>) -> Vec<f32> {
        self.images[range].iter().flat_map(|im| im.to_chw()).collect()
    }

    /// Number of samples per label.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.classes];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }
}
