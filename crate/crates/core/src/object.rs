//! Object space: one canonical exemplar per class, rendered in random poses.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::imageops::{
    affine_warp, blur, color_jitter, exposure_adjust, load_png, perspective_warp, resize, Affine, Image, JitterRanges,
};

/// Canonical rendering of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectExemplar {
    pub class_id: usize,
    pub name: String,
    pub canonical: Image,
}

/// One random pose of an exemplar, without background.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedObject {
    pub image: Image,
    pub mask: Vec<bool>,
    pub class_id: usize,
}

/// Ranges the augmentations draw from. Every range is closed; a collapsed
/// range always yields its single value.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentParams {
    /// Degrees.
    pub rotation: (f64, f64),
    /// Fraction of the image size, drawn independently per axis.
    pub translate: (f64, f64),
    pub scale: (f64, f64),
    /// Degrees.
    pub shear: (f64, f64),
    /// Maximum corner displacement as a fraction of the shorter side.
    pub perspective: f64,
    /// Odd box-filter sizes, one picked uniformly.
    pub blur_kernels: Vec<usize>,
    pub jitter: JitterRanges,
    pub exposure: (f64, f64),
}

impl AugmentParams {
    /// No augmentation at all.
    pub fn identity() -> Self {
        Self {
            rotation: (0.0, 0.0),
            translate: (0.0, 0.0),
            scale: (1.0, 1.0),
            shear: (0.0, 0.0),
            perspective: 0.0,
            blur_kernels: vec![1],
            jitter: JitterRanges::IDENTITY,
            exposure: (1.0, 1.0),
        }
    }

    /// Geometric ranges used for digits.
    pub fn mnist() -> Self {
        Self {
            rotation: (-15.0, 15.0),
            translate: (-0.1, 0.1),
            scale: (0.8, 1.2),
            shear: (-10.0, 10.0),
            perspective: 0.2,
            blur_kernels: vec![1, 3],
            ..Self::identity()
        }
    }

    /// Digit geometry plus color jitter and exposure for sign pictograms.
    pub fn gtsrb() -> Self {
        Self {
            jitter: JitterRanges { brightness: (0.7, 1.3), contrast: (0.7, 1.3), saturation: (0.7, 1.3), hue: (-0.1, 0.1) },
            exposure: (0.7, 1.3),
            ..Self::mnist()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |name: &str, (lo, hi): (f64, f64)| {
            if lo.is_finite() && hi.is_finite() && lo <= hi {
                Ok(())
            } else {
                Err(Error::config(format!("aug.{name} range [{lo}, {hi}] is not ordered")))
            }
        };
        ordered("rotation", self.rotation)?;
        ordered("translate", self.translate)?;
        ordered("scale", self.scale)?;
        ordered("shear", self.shear)?;
        ordered("exposure", self.exposure)?;
        if self.scale.0 <= 0.0 {
            return Err(Error::config("aug.scale must stay positive"));
        }
        if self.exposure.0 <= 0.0 {
            return Err(Error::config("aug.exposure must stay positive"));
        }
        if self.shear.0 <= -90.0 || self.shear.1 >= 90.0 {
            return Err(Error::config("aug.shear must lie strictly inside (-90, 90) degrees"));
        }
        if !(0.0..0.5).contains(&self.perspective) {
            return Err(Error::config("aug.perspective must lie in [0, 0.5)"));
        }
        if self.blur_kernels.is_empty() || self.blur_kernels.iter().any(|&k| k == 0 || k % 2 == 0) {
            return Err(Error::config(format!("aug.blur kernels must be odd and positive, got {:?}", self.blur_kernels)));
        }
        self.jitter.validate().map_err(|e| Error::config(format!("aug jitter: {e}")))
    }
}

fn draw<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Renders `exemplar` in a random pose: affine, perspective, photometric,
/// then blur. The mask is taken from the final alpha.
pub fn sample_object<R: Rng + ?Sized>(exemplar: &ObjectExemplar, aug: &AugmentParams, rng: &mut R) -> Result<RenderedObject> {
    if exemplar.canonical.alpha().is_none() {
        return Err(Error::input(format!("exemplar {} has no alpha", exemplar.class_id)));
    }
    let affine = Affine {
        rotation: draw(rng, aug.rotation),
        translate: (draw(rng, aug.translate), draw(rng, aug.translate)),
        scale: draw(rng, aug.scale),
        shear: draw(rng, aug.shear),
    };
    let mut img = affine_warp(&exemplar.canonical, &affine, 0.0)?;
    img = perspective_warp(&img, aug.perspective, rng)?;
    img = color_jitter(&img, &aug.jitter, rng)?;
    img = exposure_adjust(&img, draw(rng, aug.exposure))?;
    let kernel = *aug.blur_kernels.choose(rng).ok_or_else(|| Error::config("no blur kernels configured"))?;
    img = blur(&img, kernel)?;
    Ok(RenderedObject { mask: img.mask(), image: img, class_id: exemplar.class_id })
}

/// How to derive alpha for exemplar files that have none.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackgroundKey {
    White,
    Black,
}

impl std::str::FromStr for BackgroundKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "white" => Ok(Self::White),
            "black" => Ok(Self::Black),
            other => Err(Error::config(format!("background key must be white or black, got {other:?}"))),
        }
    }
}

/// Options applied while loading exemplars.
#[derive(Debug, Clone, PartialEq)]
pub struct ExemplarOptions {
    /// Target square side; files of another size are resized.
    pub side: Option<usize>,
    /// Target channel count (1 or 3).
    pub channels: usize,
    pub background_key: Option<BackgroundKey>,
}

fn keyed_alpha(img: &Image, key: BackgroundKey) -> Vec<f32> {
    let target = match key {
        BackgroundKey::White => 1.0,
        BackgroundKey::Black => 0.0,
    };
    img.pixels()
        .chunks(img.channels())
        .map(|p| if p.iter().all(|&v| v == target) { 0.0 } else { 1.0 })
        .collect()
}

/// Loads `<id>.png` for ids `0..expected_n` from `dir`. An optional
/// `labels.tsv` (`id<TAB>name` per line) supplies class names.
pub fn load_exemplars(dir: &Path, expected_n: usize, opts: &ExemplarOptions) -> Result<Vec<ObjectExemplar>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::missing("exemplar directory", dir, e))?;
    let mut files = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("png") {
            continue;
        }
        let Some(id) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<usize>().ok()) else {
            continue;
        };
        if files.insert(id, path.clone()).is_some() {
            return Err(Error::dataset(format!("class id {id} appears twice in {}", dir.display())));
        }
    }
    if let Some(id) = (0..expected_n).find(|id| !files.contains_key(id)) {
        return Err(Error::dataset(format!(
            "missing exemplar for class id {id} ({}/{id}.png); found {} of {expected_n}",
            dir.display(),
            files.keys().filter(|&&k| k < expected_n).count()
        )));
    }
    if let Some(extra) = files.keys().find(|&&k| k >= expected_n) {
        return Err(Error::dataset(format!(
            "exemplar {extra}.png in {} is outside the expected ids 0..{expected_n}",
            dir.display()
        )));
    }
    let names = read_labels(&dir.join("labels.tsv"))?;
    let mut out = Vec::with_capacity(expected_n);
    for (id, path) in files {
        let mut img = load_png(&path)?.to_channels(opts.channels)?;
        if img.alpha().is_none() {
            let key = opts.background_key.ok_or_else(|| {
                Error::dataset(format!(
                    "{} has no alpha channel; save it with transparency or set a background key \
                     (white or black) to treat that color as transparent",
                    path.display()
                ))
            })?;
            let alpha = keyed_alpha(&img, key);
            img = img.with_alpha(Some(alpha))?;
        }
        if let Some(side) = opts.side {
            img = resize(&img, side, side)?;
        }
        let name = names.get(&id).cloned().unwrap_or_else(|| id.to_string());
        out.push(ObjectExemplar { class_id: id, name, canonical: img });
    }
    let first = &out[0].canonical;
    if let Some(odd) = out.iter().find(|e| !e.canonical.same_shape(first)) {
        return Err(Error::dataset(format!(
            "exemplar {} is {}x{} but exemplar 0 is {}x{}; set an explicit side to resize",
            odd.class_id,
            odd.canonical.height(),
            odd.canonical.width(),
            first.height(),
            first.width()
        )));
    }
    Ok(out)
}

fn read_labels(path: &Path) -> Result<BTreeMap<usize, String>> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(BTreeMap::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut names = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, name) = line
            .split_once('\t')
            .and_then(|(id, name)| Some((id.trim().parse::<usize>().ok()?, name.trim().to_string())))
            .ok_or_else(|| Error::dataset(format!("{} line {}: expected `id<TAB>name`", path.display(), i + 1)))?;
        names.insert(id, name);
    }
    Ok(names)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageops::save_png;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn square(id: usize) -> ObjectExemplar {
        let mut alpha = vec![0.0; 28 * 28];
        for y in 8..20 {
            for x in 8..20 {
                alpha[y * 28 + x] = 1.0;
            }
        }
        let canonical = Image::new(28, 28, 1, vec![1.0; 28 * 28], Some(alpha)).unwrap();
        ObjectExemplar { class_id: id, name: id.to_string(), canonical }
    }

    #[test]
    fn identity_augmentation_returns_canonical() {
        let e = square(3);
        let r = sample_object(&e, &AugmentParams::identity(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(r.image, e.canonical);
        assert_eq!(r.class_id, 3);
        assert_eq!(r.mask, e.canonical.mask());
    }

    #[test]
    fn sampling_is_seeded() {
        let e = square(1);
        let aug = AugmentParams::gtsrb();
        let a = sample_object(&e, &aug, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = sample_object(&e, &aug, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let c = sample_object(&e, &aug, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn presets_validate() {
        AugmentParams::mnist().validate().unwrap();
        AugmentParams::gtsrb().validate().unwrap();
        let bad = AugmentParams { blur_kernels: vec![2], ..AugmentParams::mnist() };
        assert!(bad.validate().is_err());
        let bad = AugmentParams { scale: (1.2, 0.8), ..AugmentParams::mnist() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn loader_reports_missing_ids_and_alpha() {
        let dir = tempfile::tempdir().unwrap();
        let opts = ExemplarOptions { side: None, channels: 1, background_key: None };
        for id in [0, 1, 3] {
            save_png(&square(id).canonical, &dir.path().join(format!("{id}.png"))).unwrap();
        }
        let err = load_exemplars(dir.path(), 4, &opts).unwrap_err();
        assert!(matches!(&err, Error::Dataset(m) if m.contains("class id 2")), "{err}");
        save_png(&square(2).canonical, &dir.path().join("2.png")).unwrap();
        std::fs::write(dir.path().join("labels.tsv"), "0\tzero\n2\ttwo\n").unwrap();
        let ex = load_exemplars(dir.path(), 4, &opts).unwrap();
        assert_eq!(ex.iter().map(|e| e.class_id).collect::<Vec<_>>(), [0, 1, 2, 3]);
        assert_eq!(ex[2].name, "two");
        assert_eq!(ex[1].name, "1");

        let flat = Image::filled(28, 28, 1, 1.0).unwrap();
        save_png(&flat, &dir.path().join("4.png")).unwrap();
        let err = load_exemplars(dir.path(), 5, &opts).unwrap_err();
        assert!(matches!(&err, Error::Dataset(m) if m.contains("background key")), "{err}");
        let keyed = ExemplarOptions { background_key: Some(BackgroundKey::White), ..opts };
        let ex = load_exemplars(dir.path(), 5, &keyed).unwrap();
        assert!(ex[4].canonical.alpha().unwrap().iter().all(|&a| a == 0.0));
    }
}
