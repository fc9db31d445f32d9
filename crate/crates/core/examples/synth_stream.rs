//! Generates one round of training samples in every ablation mode and shows
//! how contexts were produced. An optional image directory replaces the
//! uniform noise contexts.
//!
//!     cargo run --release --example synth_stream -- assets/font 10 [context dir]

use std::path::PathBuf;

use ctxforge::context::load_context_dir;
use ctxforge::imageops::save_png;
use ctxforge::object::{load_exemplars, AugmentParams, ExemplarOptions};
use ctxforge::refine::PgdConfig;
use ctxforge::rng::{Purpose, SeedStream};
use ctxforge::tensor::{Architecture, ModelSpec, Network};
use ctxforge::trainer::{generate_round, AblationMode, Counters, RoundInputs, TrainConfig};

fn main() -> ctxforge::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "assets/font".into()));
    let classes = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let pool = match args.next() {
        Some(d) => load_context_dir(d.as_ref(), 28, 1)?,
        None => Vec::new(),
    };
    let exemplars = load_exemplars(&dir, classes, &ExemplarOptions { side: Some(28), channels: 1, background_key: None })?;
    let stream = SeedStream::new(21);
    let spec = ModelSpec::new(Architecture::Mnist2Conv, [1, 28, 28], classes)?;
    let net = Network::<f32>::init(spec, &mut stream.rng(Purpose::Init, 0, 0, 0));
    let (aug, pgd) = (AugmentParams::mnist(), PgdConfig::mnist());

    println!("{:<16} {:>7} {:>7} {:>7} {:>7} {:>7}", "mode", "renders", "refined", "chained", "reused", "fresh");
    for mode in AblationMode::ALL {
        let cfg = TrainConfig { passes: 4, ..TrainConfig::mnist(mode) };
        let inputs = RoundInputs { exemplars: &exemplars, aug: &aug, pgd: &pgd, cfg: &cfg, stream, contexts: &pool };
        let mut c = Counters::default();
        let batch = generate_round(&net, &inputs, 0, &mut c)?;
        println!(
            "{:<16} {:>7} {:>7} {:>7} {:>7} {:>7}",
            mode.name(),
            c.renders,
            c.refinements,
            c.chained,
            c.reused,
            c.fresh_contexts
        );

        let out = PathBuf::from("target/examples-out/synth").join(mode.name());
        std::fs::create_dir_all(&out).map_err(|e| ctxforge::Error::io(&out, e))?;
        for (i, (img, label)) in batch.images.iter().zip(&batch.labels).enumerate() {
            let pass = i / classes;
            save_png(img, &out.join(format!("p{pass}_{label}.png")))?;
        }
    }
    println!("samples under target/examples-out/synth/<mode>/p<pass>_<label>.png");
    Ok(())
}
