//! Turns a folder of sign pictograms into an exemplar set: `<id>.png` at
//! 32x32 RGBA plus `labels.tsv`, ids in file-name order. Pixels close to the
//! background color become transparent.
//!
//!     cargo run --example gtsrb_pictograms -- ~/pictograms assets/signs white

use std::io::Write;
use std::path::PathBuf;

use ctxforge::imageops::{load_png, resize, save_png};
use ctxforge::object::BackgroundKey;
use ctxforge::Error;

const SIDE: usize = 32;
const TOLERANCE: f32 = 0.06;

fn main() -> ctxforge::Result<()> {
    let mut args = std::env::args().skip(1);
    let (Some(src), Some(dst)) = (args.next().map(PathBuf::from), args.next().map(PathBuf::from)) else {
        eprintln!("usage: gtsrb_pictograms <source dir> <exemplar dir> [white|black]");
        std::process::exit(2);
    };
    let key: BackgroundKey = args.next().as_deref().unwrap_or("white").parse()?;
    let target = if key == BackgroundKey::White { 1.0 } else { 0.0 };

    let mut files: Vec<PathBuf> = std::fs::read_dir(&src)
        .map_err(|e| Error::io(&src, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("png" | "ppm" | "pgm")))
        .collect();
    files.sort();
    std::fs::create_dir_all(&dst).map_err(|e| Error::io(&dst, e))?;
    let labels_path = dst.join("labels.tsv");
    let mut labels = std::fs::File::create(&labels_path).map_err(|e| Error::io(&labels_path, e))?;

    for (id, path) in files.iter().enumerate() {
        let img = load_png(path)?.to_channels(3)?;
        let alpha = match img.alpha() {
            Some(a) => a.to_vec(),
            None => img
                .pixels()
                .chunks(3)
                .map(|p| if p.iter().all(|v| (v - target).abs() <= TOLERANCE) { 0.0 } else { 1.0 })
                .collect(),
        };
        let keyed = img.with_alpha(Some(alpha))?;
        save_png(&resize(&keyed, SIDE, SIDE)?, &dst.join(format!("{id}.png")))?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        writeln!(labels, "{id}\t{name}").map_err(|e| Error::io(&labels_path, e))?;
    }
    println!("{} exemplars written to {}", files.len(), dst.display());
    Ok(())
}
