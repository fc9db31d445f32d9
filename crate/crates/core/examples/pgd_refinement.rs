//! Refines a composite against a network and reports the loss it gains.
//!
//! With a checkpoint the trained model is attacked, otherwise a freshly
//! initialized one.
//!
//!     cargo run --release --example pgd_refinement -- target/examples-out/train_shapes/best.ckpt

use std::path::PathBuf;

use ctxforge::imageops::{composite, save_png, uniform_noise_image};
use ctxforge::object::{load_exemplars, sample_object, AugmentParams, ExemplarOptions};
use ctxforge::refine::{pgd_refine, PgdConfig};
use ctxforge::rng::{Purpose, SeedStream};
use ctxforge::tensor::{read_checkpoint, Architecture, Mode, ModelSpec, Network, Tensor};

fn main() -> ctxforge::Result<()> {
    let stream = SeedStream::new(5);
    let net: Network<f64> = match std::env::args().nth(1) {
        Some(path) => read_checkpoint(path.as_ref())?.network()?,
        None => {
            let spec = ModelSpec::new(Architecture::Mnist2Conv, [1, 28, 28], 5)?;
            Network::init(spec, &mut stream.rng(Purpose::Init, 0, 0, 0))
        }
    };
    let classes = net.spec().classes;
    let exemplars =
        load_exemplars("assets/shapes".as_ref(), classes, &ExemplarOptions { side: Some(28), channels: 1, background_key: None })?;
    let out = PathBuf::from("target/examples-out/pgd");
    std::fs::create_dir_all(&out).map_err(|e| ctxforge::Error::io(&out, e))?;

    let loss = |img: &ctxforge::imageops::Image, label: usize| -> ctxforge::Result<f64> {
        let x = Tensor::new(vec![1, 1, 28, 28], img.to_chw().into_iter().map(f64::from).collect())?;
        net.loss(&x, &[label], Mode::Eval)
    };
    let configs = [
        ("unbounded", PgdConfig::mnist()),
        ("object-ball", PgdConfig { eps_fg: 4.0 / 255.0, eps_bg: 0.0, ..PgdConfig::gtsrb() }),
    ];
    for ex in &exemplars {
        let mut rng = stream.rng(Purpose::Object, 0, 0, ex.class_id as u64);
        let obj = sample_object(ex, &AugmentParams::mnist(), &mut rng)?;
        let ctx = uniform_noise_image(28, 28, 1, &mut rng)?;
        let raw = composite(&obj.image, &ctx)?;
        save_png(&raw, &out.join(format!("{}_raw.png", ex.class_id)))?;
        let before = loss(&raw, ex.class_id)?;
        for (name, cfg) in &configs {
            let mut r = stream.rng(Purpose::Refine, 0, 0, ex.class_id as u64);
            let refined = pgd_refine(&net, &raw, ex.class_id, &obj.mask, cfg, &mut r)?;
            let moved = refined.pixels().iter().zip(raw.pixels()).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
            println!(
                "class {} {name:<11} loss {before:.4} -> {:.4}  max change {:.4}",
                ex.class_id,
                loss(&refined, ex.class_id)?,
                moved
            );
            save_png(&refined, &out.join(format!("{}_{name}.png", ex.class_id)))?;
        }
    }
    Ok(())
}
