use rand::Rng;

use super::Image;
use crate::error::{Error, Result};

/// Straight-alpha blend `alpha * object + (1 - alpha) * context`; the result
/// has no alpha.
pub fn composite(object: &Image, context: &Image) -> Result<Image> {
    if !object.same_shape(context) {
        return Err(Error::input(format!(
            "object is {}x{}x{} but context is {}x{}x{}",
            object.height(),
            object.width(),
            object.channels(),
            context.height(),
            context.width(),
            context.channels()
        )));
    }
    let alpha = object.alpha().ok_or_else(|| Error::input("object image has no alpha channel"))?;
    let ch = object.channels();
    let pixels = object
        .pixels()
        .iter()
        .zip(context.pixels())
        .enumerate()
        .map(|(i, (&o, &c))| {
            let a = alpha[i / ch];
            a * o + (1.0 - a) * c
        })
        .collect();
    Ok(Image::from_clamped(object.height(), object.width(), ch, pixels, None))
}

/// I.i.d. `U[0, 1)` pixels.
pub fn uniform_noise_image<R: Rng + ?Sized>(height: usize, width: usize, channels: usize, rng: &mut R) -> Result<Image> {
    let pixels = (0..height * width * channels).map(|_| rng.gen::<f32>()).collect();
    Image::new(height, width, channels, pixels, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn blend_endpoints() {
        let obj = |a: f32| Image::new(2, 2, 3, vec![1.0; 12], Some(vec![a; 4])).unwrap();
        let ctx = Image::filled(2, 2, 3, 0.0).unwrap();
        assert_eq!(composite(&obj(1.0), &ctx).unwrap().pixels(), &[1.0; 12]);
        assert_eq!(composite(&obj(0.0), &ctx).unwrap(), ctx);
        assert_eq!(composite(&obj(0.5), &ctx).unwrap().pixels(), &[0.5; 12]);
        assert!(composite(&obj(0.5), &ctx).unwrap().alpha().is_none());
    }

    #[test]
    fn errors() {
        let ctx = Image::filled(2, 2, 1, 0.0).unwrap();
        assert!(composite(&Image::filled(2, 2, 1, 1.0).unwrap(), &ctx).is_err());
        let obj = Image::new(2, 3, 1, vec![1.0; 6], Some(vec![1.0; 6])).unwrap();
        assert!(composite(&obj, &ctx).is_err());
    }

    #[test]
    fn noise_statistics() {
        let a = uniform_noise_image(64, 64, 3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = uniform_noise_image(64, 64, 3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let c = uniform_noise_image(64, 64, 3, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a, b);
        assert!((0.47..=0.53).contains(&a.mean()));
        let same = a.pixels().iter().zip(c.pixels()).filter(|(x, y)| x == y).count();
        assert!(same as f64 <= 0.01 * a.pixels().len() as f64);
        assert!(uniform_noise_image(0, 4, 1, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }
}
