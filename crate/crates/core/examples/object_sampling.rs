//! Draws random poses of every exemplar and reports mask coverage.
//!
//!     cargo run --example object_sampling -- assets/shapes 8

use std::path::PathBuf;

use ctxforge::imageops::save_png;
use ctxforge::object::{load_exemplars, sample_object, AugmentParams, ExemplarOptions};
use ctxforge::rng::{Purpose, SeedStream};

fn main() -> ctxforge::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "assets/shapes".into()));
    let per_class: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(8);
    let out = PathBuf::from("target/examples-out/objects");
    std::fs::create_dir_all(&out).map_err(|e| ctxforge::Error::io(&out, e))?;

    let count = std::fs::read_dir(&dir)
        .map_err(|e| ctxforge::Error::io(&dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "png"))
        .count();
    let exemplars = load_exemplars(&dir, count, &ExemplarOptions { side: Some(28), channels: 1, background_key: None })?;
    let aug = AugmentParams::mnist();
    let stream = SeedStream::new(3);

    for ex in &exemplars {
        let mut fractions = Vec::new();
        for k in 0..per_class {
            let mut rng = stream.rng(Purpose::Object, 0, k, ex.class_id as u64);
            let obj = sample_object(ex, &aug, &mut rng)?;
            fractions.push(obj.mask.iter().filter(|&&m| m).count() as f64 / obj.mask.len() as f64);
            save_png(&obj.image, &out.join(format!("{}_{k:02}.png", ex.class_id)))?;
        }
        let lo = fractions.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = fractions.iter().cloned().fold(0.0, f64::max);
        println!("class {} ({:<8}) mask coverage {lo:.3}..{hi:.3}", ex.class_id, ex.name);
    }
    println!("poses in {}", out.display());
    Ok(())
}
