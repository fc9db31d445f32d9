//! Scores a checkpoint on MNIST (when available) or on synthetic composites,
//! with running and with per-batch normalization statistics.
//!
//!     CTXFORGE_DATA=/data cargo run --release --example evaluate_checkpoint -- runs/mnist-full/best.ckpt

use std::path::{Path, PathBuf};

use ctxforge::data::{build_synthetic_testset, load_mnist_idx, TestSet};
use ctxforge::object::{load_exemplars, AugmentParams, ExemplarOptions};
use ctxforge::tensor::{read_checkpoint, Network};
use ctxforge::trainer::{evaluate_with, BnStats};

fn mnist(root: &Path) -> Option<TestSet> {
    let set = load_mnist_idx(&root.join("t10k-images-idx3-ubyte"), &root.join("t10k-labels-idx1-ubyte"));
    set.map_err(|e| eprintln!("no MNIST: {e}")).ok()
}

fn main() -> ctxforge::Result<()> {
    let path = PathBuf::from(
        std::env::args().nth(1).unwrap_or_else(|| "target/examples-out/train_shapes/best.ckpt".into()),
    );
    let net: Network<f32> = read_checkpoint(&path)?.network()?;
    let spec = net.spec().clone();
    println!("{} with {} classes, input {:?}", spec.architecture, spec.classes, spec.input);

    let real = match std::env::var_os("CTXFORGE_DATA") {
        Some(root) if spec.classes == 10 && spec.input == [1, 28, 28] => mnist(&PathBuf::from(root).join("mnist")),
        _ => None,
    };
    let set = match real {
        Some(set) => set,
        None => {
            let dir = if spec.classes == 10 { "assets/font" } else { "assets/shapes" };
            let [c, side, _] = spec.input;
            let opts = ExemplarOptions { side: Some(side), channels: c, background_key: None };
            build_synthetic_testset(&load_exemplars(dir.as_ref(), spec.classes, &opts)?, &AugmentParams::mnist(), 1000, 1)?
        }
    };
    println!("{:?} set of {} images, per class {:?}", set.source, set.len(), set.histogram());
    for bn in [BnStats::Running, BnStats::Batch] {
        let e = evaluate_with(&net, &set, bn)?;
        println!("{bn:?}: accuracy {:.4}  loss {:.4}", e.accuracy, e.mean_loss);
    }
    Ok(())
}
