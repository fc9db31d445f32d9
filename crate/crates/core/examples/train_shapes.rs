//! Trains the small digit network on the bundled shapes through the library
//! API, then scores the best checkpoint on a held-out synthetic set.
//!
//!     cargo run --release --example train_shapes -- full 6

use std::path::PathBuf;

use ctxforge::data::build_synthetic_testset;
use ctxforge::object::{load_exemplars, AugmentParams, ExemplarOptions};
use ctxforge::refine::PgdConfig;
use ctxforge::tensor::{read_checkpoint, Architecture, ModelSpec, Network};
use ctxforge::trainer::{evaluate, run_training, AblationMode, Precision, RunOptions, RunSetup, TrainConfig};

fn main() -> ctxforge::Result<()> {
    let mut args = std::env::args().skip(1);
    let mode: AblationMode = args.next().as_deref().unwrap_or("full").parse()?;
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(6);
    let out = PathBuf::from("target/examples-out/train_shapes");
    if out.exists() {
        std::fs::remove_dir_all(&out).map_err(|e| ctxforge::Error::io(&out, e))?;
    }

    let exemplars =
        load_exemplars("assets/shapes".as_ref(), 5, &ExemplarOptions { side: Some(28), channels: 1, background_key: None })?;
    let spec = ModelSpec::new(Architecture::Mnist2Conv, [1, 28, 28], 5)?;
    let aug = AugmentParams::mnist();
    let pgd = PgdConfig { iterations: 2, ..PgdConfig::mnist() };
    let train = TrainConfig {
        epochs,
        rounds_per_epoch: 10,
        passes: 4,
        eval_every: 2,
        val_size: 200,
        precision: Precision::F32,
        ..TrainConfig::mnist(mode)
    };
    let setup = RunSetup { model: &spec, exemplars: &exemplars, aug: &aug, pgd: &pgd, train: &train, test_set: None, contexts: &[] };
    let opts = RunOptions { out_dir: out.clone(), resume: false, manifest: None, zero_seconds: false };
    let outcome = run_training::<f32>(&setup, &opts, &mut |row| {
        println!("epoch {:>3}  synth_val {:.3}  loss {:.4}", row.epoch, row.synth_val_acc, row.mean_loss)
    })?;
    println!("{:?}", outcome.counters);

    let best: Network<f32> = read_checkpoint(&out.join("best.ckpt"))?.network()?;
    let held_out = build_synthetic_testset(&exemplars, &aug, 500, 99)?;
    let score = evaluate(&best, &held_out)?;
    println!("best checkpoint on 500 fresh composites: accuracy {:.3}  loss {:.4}", score.accuracy, score.mean_loss);
    Ok(())
}
