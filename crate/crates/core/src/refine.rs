//! Local refinement: sign-gradient ascent on the loss inside per-region
//! l-infinity balls.

use rand::Rng;

use crate::error::{Error, Result};
use crate::imageops::Image;
use crate::tensor::{Network, Real, Tensor};

/// Step size, iteration count and ball radii for one refinement. Radii may
/// be `f64::INFINITY`, in which case only the pixel bounds apply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgdConfig {
    pub alpha: f64,
    pub iterations: usize,
    pub eps_fg: f64,
    pub eps_bg: f64,
    pub init_noise: f64,
    pub bounds: (f64, f64),
}

impl PgdConfig {
    /// Half of the smaller of the step and the foreground radius.
    pub fn default_init_noise(alpha: f64, eps_fg: f64) -> f64 {
        if eps_fg.is_finite() {
            alpha.min(eps_fg) / 2.0
        } else {
            alpha / 2.0
        }
    }

    /// Digits: 8 unprojected steps of 1.6/255.
    pub fn mnist() -> Self {
        let alpha = 1.6 / 255.0;
        Self {
            alpha,
            iterations: 8,
            eps_fg: f64::INFINITY,
            eps_bg: f64::INFINITY,
            init_noise: Self::default_init_noise(alpha, f64::INFINITY),
            bounds: (0.0, 1.0),
        }
    }

    /// Signs: steps of 2/255 inside a 4/255 ball on the object only.
    pub fn gtsrb() -> Self {
        let (alpha, eps_fg) = (2.0 / 255.0, 4.0 / 255.0);
        Self {
            alpha,
            iterations: 8,
            eps_fg,
            eps_bg: 0.0,
            init_noise: Self::default_init_noise(alpha, eps_fg),
            bounds: (0.0, 1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations > 0 && !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config(format!("pgd.alpha must be positive, got {}", self.alpha)));
        }
        for (name, eps) in [("eps_fg", self.eps_fg), ("eps_bg", self.eps_bg)] {
            if !(eps >= 0.0) {
                return Err(Error::config(format!("pgd.{name} must be >= 0 or inf, got {eps}")));
            }
        }
        if !(self.init_noise >= 0.0 && self.init_noise.is_finite()) {
            return Err(Error::config(format!("pgd.init_noise must be finite and >= 0, got {}", self.init_noise)));
        }
        let (lo, hi) = self.bounds;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(Error::config(format!("pixel bounds [{lo}, {hi}] must be ordered within [0, 1]")));
        }
        Ok(())
    }
}

/// Anything that can report the loss gradient with respect to its input.
pub trait InputGradient {
    /// Input shape `[channels, height, width]`.
    fn input_dims(&self) -> [usize; 3];

    /// Gradient of the loss for a planar batch `[B, C, H, W]`, same layout.
    fn loss_input_gradient(&self, x: &[f32], labels: &[usize]) -> Result<Vec<f64>>;
}

impl<T: Real> InputGradient for Network<T> {
    fn input_dims(&self) -> [usize; 3] {
        self.spec().input
    }

    fn loss_input_gradient(&self, x: &[f32], labels: &[usize]) -> Result<Vec<f64>> {
        let [c, h, w] = self.input_dims();
        let t = Tensor::new(vec![labels.len(), c, h, w], x.iter().map(|&v| T::from_f32(v)).collect())?;
        let bp = self.input_gradient(&t, labels)?;
        let g = bp.input_grad.ok_or_else(|| Error::numerical("refine", "network returned no input gradient"))?;
        Ok(g.data().iter().map(|v| v.as_f64()).collect())
    }
}

/// Per-element box `[lo, hi]` around `x0` satisfying `hi - x0 <= eps` and
/// `x0 - lo <= eps` exactly, intersected with `bounds`.
fn ball(x0: f32, eps: f64, bounds: (f32, f32)) -> (f32, f32) {
    if !eps.is_finite() {
        return bounds;
    }
    if eps == 0.0 {
        return (x0, x0);
    }
    let e = eps as f32;
    let mut hi = x0 + e;
    while hi as f64 - x0 as f64 > eps {
        hi = f32::from_bits(hi.to_bits() - 1);
    }
    let mut lo = x0 - e;
    while x0 as f64 - lo as f64 > eps {
        lo = if lo > 0.0 { f32::from_bits(lo.to_bits() + 1) } else { f32::from_bits(lo.to_bits() - 1) };
    }
    (lo.max(bounds.0), hi.min(bounds.1))
}

/// Everything needed to refine one image.
struct Slot {
    lo: Vec<f32>,
    hi: Vec<f32>,
    x: Vec<f32>,
}

fn prepare<R: Rng + ?Sized>(img: &Image, mask: &[bool], cfg: &PgdConfig, rng: &mut R) -> Result<Slot> {
    let (h, w) = (img.height(), img.width());
    if mask.len() != h * w {
        return Err(Error::input(format!("mask has {} entries for a {h}x{w} image", mask.len())));
    }
    let bounds = (cfg.bounds.0 as f32, cfg.bounds.1 as f32);
    let x0 = img.to_chw();
    let plane = h * w;
    let mut lo = vec![0.0; x0.len()];
    let mut hi = vec![0.0; x0.len()];
    for (i, &v) in x0.iter().enumerate() {
        let eps = if mask[i % plane] { cfg.eps_fg } else { cfg.eps_bg };
        (lo[i], hi[i]) = ball(v, eps, bounds);
        if lo[i] > hi[i] {
            // pixel outside the bounds: pin it to the nearest bound
            let b = v.clamp(bounds.0, bounds.1);
            (lo[i], hi[i]) = (b, b);
        }
    }
    let noise = cfg.init_noise;
    let x = x0
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let d = if noise > 0.0 { rng.gen_range(-noise..=noise) as f32 } else { 0.0 };
            (v + d).clamp(lo[i], hi[i])
        })
        .collect();
    Ok(Slot { lo, hi, x })
}

fn sign(g: f64) -> f32 {
    if g > 0.0 {
        1.0
    } else if g < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Refines a batch of images in lockstep against one frozen model. Each
/// image uses its own generator for the random start.
pub fn pgd_refine_batch<M, R>(
    model: &M,
    images: &[Image],
    labels: &[usize],
    masks: &[Vec<bool>],
    cfg: &PgdConfig,
    rngs: &mut [R],
) -> Result<Vec<Image>>
where
    M: InputGradient + ?Sized,
    R: Rng,
{
    cfg.validate()?;
    if images.len() != labels.len() || images.len() != masks.len() || images.len() != rngs.len() {
        return Err(Error::input("refinement batch parts differ in length"));
    }
    if images.is_empty() {
        return Ok(Vec::new());
    }
    let [c, h, w] = model.input_dims();
    if let Some(bad) = images.iter().find(|i| [i.channels(), i.height(), i.width()] != [c, h, w]) {
        return Err(Error::input(format!(
            "image is {}x{}x{} but the model expects {c}x{h}x{w}",
            bad.channels(),
            bad.height(),
            bad.width()
        )));
    }
    let mut slots = images
        .iter()
        .zip(masks)
        .zip(rngs.iter_mut())
        .map(|((img, mask), rng)| prepare(img, mask, cfg, rng))
        .collect::<Result<Vec<_>>>()?;
    let alpha = cfg.alpha as f32;
    let per = c * h * w;
    let mut batch = vec![0.0f32; per * slots.len()];
    for _ in 0..cfg.iterations {
        for (s, chunk) in slots.iter().zip(batch.chunks_mut(per)) {
            chunk.copy_from_slice(&s.x);
        }
        let grad = model.loss_input_gradient(&batch, labels)?;
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::numerical("refine", format!("non-finite input gradient at element {i}")));
        }
        for (s, g) in slots.iter_mut().zip(grad.chunks(per)) {
            for i in 0..per {
                s.x[i] = (s.x[i] + alpha * sign(g[i])).clamp(s.lo[i], s.hi[i]);
            }
        }
    }
    slots.into_iter().map(|s| Image::from_chw(h, w, c, &s.x)).collect()
}

/// Refines a single image; see [`pgd_refine_batch`].
pub fn pgd_refine<M, R>(model: &M, image: &Image, label: usize, mask: &[bool], cfg: &PgdConfig, rng: &mut R) -> Result<Image>
where
    M: InputGradient + ?Sized,
    R: Rng,
{
    let mut rngs = [rng];
    let mut out = pgd_refine_batch(model, std::slice::from_ref(image), &[label], &[mask.to_vec()], cfg, &mut rngs)?;
    Ok(out.pop().expect("one image"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Two-class linear model on one pixel: logits `(w x, -w x)`.
    struct OnePixel {
        w: f64,
    }

    impl InputGradient for OnePixel {
        fn input_dims(&self) -> [usize; 3] {
            [1, 1, 1]
        }

        fn loss_input_gradient(&self, x: &[f32], labels: &[usize]) -> Result<Vec<f64>> {
            // NLL of softmax(w x, -w x); d/dx = -(1 - p_y) * dz_y/dx + p_other * dz_other/dx
            Ok(x.iter()
                .zip(labels)
                .map(|(&v, &y)| {
                    let z = [self.w * v as f64, -self.w * v as f64];
                    let p0 = 1.0 / (1.0 + (z[1] - z[0]).exp());
                    let p = [p0, 1.0 - p0];
                    let dz = [self.w, -self.w];
                    p[0] * dz[0] + p[1] * dz[1] - dz[y]
                })
                .collect())
        }
    }

    struct Flat;

    impl InputGradient for Flat {
        fn input_dims(&self) -> [usize; 3] {
            [1, 2, 2]
        }
        fn loss_input_gradient(&self, x: &[f32], _: &[usize]) -> Result<Vec<f64>> {
            Ok(vec![0.0; x.len()])
        }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn zero_iterations_without_noise_is_identity() {
        let img = Image::new(2, 2, 1, vec![0.1, 0.5, 0.9, 1.0], None).unwrap();
        let cfg = PgdConfig { iterations: 0, init_noise: 0.0, ..PgdConfig::mnist() };
        assert_eq!(pgd_refine(&Flat, &img, 0, &[true; 4], &cfg, &mut rng()).unwrap(), img);
        let cfg = PgdConfig { init_noise: 0.0, ..PgdConfig::mnist() };
        assert_eq!(pgd_refine(&Flat, &img, 0, &[true; 4], &cfg, &mut rng()).unwrap(), img);
    }

    #[test]
    fn single_step_follows_gradient_sign() {
        let cfg = PgdConfig { alpha: 0.1, iterations: 1, init_noise: 0.0, ..PgdConfig::mnist() };
        let img = Image::new(1, 1, 1, vec![0.5], None).unwrap();
        // label 0 with w > 0: the loss falls as x grows, so ascent moves x down
        let out = pgd_refine(&OnePixel { w: 2.0 }, &img, 0, &[true], &cfg, &mut rng()).unwrap();
        assert!((out.pixels()[0] - 0.4).abs() < 1e-7);
        let out = pgd_refine(&OnePixel { w: 2.0 }, &img, 1, &[true], &cfg, &mut rng()).unwrap();
        assert!((out.pixels()[0] - 0.6).abs() < 1e-7);
    }

    #[test]
    fn ball_bounds_are_exact() {
        for &x in &[0.0f32, 0.013, 0.5, 0.7777, 0.99, 1.0] {
            for &eps in &[4.0 / 255.0, 1e-3, 0.3] {
                let (lo, hi) = ball(x, eps, (0.0, 1.0));
                assert!(hi as f64 - x as f64 <= eps && x as f64 - lo as f64 <= eps);
                assert!(lo >= 0.0 && hi <= 1.0 && lo <= x && x <= hi);
            }
        }
        assert_eq!(ball(0.3, 0.0, (0.0, 1.0)), (0.3, 0.3));
        assert_eq!(ball(0.3, f64::INFINITY, (0.0, 1.0)), (0.0, 1.0));
    }

    #[test]
    fn validation_and_shape_errors() {
        assert!(PgdConfig { alpha: 0.0, ..PgdConfig::mnist() }.validate().is_err());
        assert!(PgdConfig { eps_bg: -1.0, ..PgdConfig::gtsrb() }.validate().is_err());
        let img = Image::filled(2, 2, 1, 0.5).unwrap();
        let err = pgd_refine(&Flat, &img, 0, &[true; 3], &PgdConfig::gtsrb(), &mut rng()).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
        assert!((PgdConfig::gtsrb().init_noise - 1.0 / 255.0).abs() < 1e-15);
        assert!((PgdConfig::mnist().init_noise - 0.8 / 255.0).abs() < 1e-15);
    }
}
