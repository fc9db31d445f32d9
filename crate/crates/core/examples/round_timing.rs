//! Times sample generation and the fit step for each training mode.
//!
//!     cargo run --release --example round_timing -- assets/font

use std::path::PathBuf;
use std::time::Instant;

use ctxforge::object::{load_exemplars, AugmentParams, ExemplarOptions};
use ctxforge::refine::PgdConfig;
use ctxforge::rng::{Purpose, SeedStream};
use ctxforge::tensor::{AdamState, Architecture, ModelSpec, Network};
use ctxforge::trainer::{fit, generate_round, AblationMode, Counters, RoundInputs, TrainConfig};

fn main() -> ctxforge::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "assets/font".into()));
    let exemplars = load_exemplars(&dir, 10, &ExemplarOptions { side: Some(28), channels: 1, background_key: None })?;
    let aug = AugmentParams::mnist();
    let pgd = PgdConfig::mnist();
    for mode in [AblationMode::Baseline, AblationMode::Full] {
        let cfg = TrainConfig::mnist(mode);
        let stream = SeedStream::new(1);
        let spec = ModelSpec::standard(Architecture::Mnist2Conv);
        let mut net = Network::<f32>::init(spec, &mut stream.rng(Purpose::Init, 0, 0, 0));
        let mut adam = AdamState::new(net.params().len(), cfg.lr, cfg.weight_decay);
        let inputs = RoundInputs { exemplars: &exemplars, aug: &aug, pgd: &pgd, cfg: &cfg, stream, contexts: &[] };
        let mut counters = Counters::default();
        let (mut gen, mut fitting) = (0.0, 0.0);
        let rounds = 5;
        for round in 0..rounds {
            let t = Instant::now();
            let batch = generate_round(&net, &inputs, round, &mut counters)?;
            gen += t.elapsed().as_secs_f64();
            let t = Instant::now();
            fit(&mut net, &mut adam, &batch.images, &batch.labels)?;
            fitting += t.elapsed().as_secs_f64();
        }
        println!(
            "{mode:>16}: generate {:.3}s  fit {:.3}s per round",
            gen / rounds as f64,
            fitting / rounds as f64
        );
    }
    Ok(())
}
