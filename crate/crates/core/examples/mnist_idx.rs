//! Reads the MNIST test split from IDX files and dumps a few digits.
//!
//!     cargo run --example mnist_idx -- /data/mnist

use std::path::PathBuf;

use ctxforge::data::load_mnist_idx;
use ctxforge::imageops::save_png;

fn main() -> ctxforge::Result<()> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .or_else(|| std::env::var_os("CTXFORGE_DATA").map(|d| PathBuf::from(d).join("mnist")))
        .unwrap_or_else(|| PathBuf::from("data/mnist"));
    let set = load_mnist_idx(&root.join("t10k-images-idx3-ubyte"), &root.join("t10k-labels-idx1-ubyte"))?;
    println!("{} images of {:?}", set.len(), set.dims());
    println!("per class: {:?}", set.histogram());
    let mean = set.images.iter().map(|i| i.mean()).sum::<f64>() / set.len() as f64;
    println!("mean intensity {mean:.4}");

    let out = PathBuf::from("target/examples-out/mnist");
    std::fs::create_dir_all(&out).map_err(|e| ctxforge::Error::io(&out, e))?;
    for (i, (img, label)) in set.images.iter().zip(&set.labels).take(20).enumerate() {
        save_png(img, &out.join(format!("{i:02}_{label}.png")))?;
    }
    println!("first 20 digits in {}", out.display());
    Ok(())
}
