//! Applies each image transform to one exemplar and writes the results.
//!
//!     cargo run --example imageops_tour -- assets/font/3.png target/examples-out/imageops

use std::path::PathBuf;

use ctxforge::imageops::{
    affine_warp, blur, color_jitter, composite, exposure_adjust, load_png, perspective_warp, resize, save_png, Affine,
    Image, JitterRanges,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> ctxforge::Result<()> {
    let mut args = std::env::args().skip(1);
    let input = PathBuf::from(args.next().unwrap_or_else(|| "assets/font/3.png".into()));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "target/examples-out/imageops".into()));
    std::fs::create_dir_all(&out).map_err(|e| ctxforge::Error::io(&out, e))?;

    let src = load_png(&input)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // grayscale exemplars get a color copy so the jitter has something to do
    let rgb = src.to_channels(3)?;
    let tinted = Image::new(
        rgb.height(),
        rgb.width(),
        3,
        rgb.pixels().chunks(3).flat_map(|p| [p[0], p[1] * 0.3, p[2] * 0.1]).collect(),
        rgb.alpha().map(<[f32]>::to_vec),
    )?;
    let jitter = JitterRanges { brightness: (0.6, 1.4), contrast: (0.6, 1.4), saturation: (0.5, 1.5), hue: (-0.2, 0.2) };

    let rotated = affine_warp(&src, &Affine { rotation: 30.0, ..Affine::IDENTITY }, 0.0)?;
    let steps: Vec<(&str, Image)> = vec![
        ("original", src.clone()),
        ("rotate30", rotated.clone()),
        ("shear15", affine_warp(&src, &Affine { shear: 15.0, scale: 0.9, ..Affine::IDENTITY }, 0.0)?),
        ("perspective", perspective_warp(&src, 0.3, &mut rng)?),
        ("blur5", blur(&src, 5)?),
        ("upscaled", resize(&src, 64, 64)?),
        ("jitter", color_jitter(&tinted, &jitter, &mut rng)?),
        ("exposure", exposure_adjust(&tinted, 1.8)?),
    ];
    for (name, img) in &steps {
        let coverage = img.alpha().map(|a| a.iter().filter(|&&v| v > 0.5).count()).unwrap_or(0);
        println!("{name:<12} {}x{}x{}  mean {:.3}  opaque px {coverage}", img.height(), img.width(), img.channels(), img.mean());
        save_png(img, &out.join(format!("{name}.png")))?;
    }

    let noise = ctxforge::imageops::uniform_noise_image(src.height(), src.width(), src.channels(), &mut rng)?;
    save_png(&composite(&rotated, &noise)?, &out.join("composite.png"))?;
    println!("wrote {} files to {}", steps.len() + 1, out.display());
    Ok(())
}
