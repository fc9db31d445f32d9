use super::{DataSource, TestSet};
use crate::error::{Error, Result};
use crate::imageops::{composite, uniform_noise_image};
use crate::object::{sample_object, AugmentParams, ObjectExemplar};
use crate::rng::{Purpose, SeedStream};

/// Class-balanced composites of random poses on fresh noise, without
/// refinement. Sample `i` has label `i mod N` and its own derived stream.
pub fn build_synthetic_testset(exemplars: &[ObjectExemplar], aug: &AugmentParams, size: usize, seed: u64) -> Result<TestSet> {
    let n = exemplars.len();
    if n == 0 || size < n {
        return Err(Error::input(format!("synthetic set of {size} needs at least one sample for each of {n} classes")));
    }
    let stream = SeedStream::new(seed);
    let mut images = Vec::with_capacity(size);
    let mut labels = Vec::with_capacity(size);
    for i in 0..size {
        let ex = &exemplars[i % n];
        let mut rng = stream.rng(Purpose::Validation, 0, 0, i as u64);
        let obj = sample_object(ex, aug, &mut rng)?;
        let c = &ex.canonical;
        let ctx = uniform_noise_image(c.height(), c.width(), c.channels(), &mut rng)?;
        images.push(composite(&obj.image, &ctx)?);
        labels.push(ex.class_id);
    }
    TestSet::new(images, labels, DataSource::Synthetic, n)
}
