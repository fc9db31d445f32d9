//! Builds a biregular object/context pairing and renders the emitted pairs.
//!
//!     cargo run --example context_pairing -- 10 5 4

use ctxforge::context::{biregular, sparse_ci_sample, SamplerConfig};
use ctxforge::imageops::{composite, save_png, uniform_noise_image, Image};
use ctxforge::object::{load_exemplars, sample_object, AugmentParams, ExemplarOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> ctxforge::Result<()> {
    let nums: Vec<usize> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let (n, m, e) = match nums[..] {
        [n, m, e] => (n, m, e),
        _ => (10, 5, 4),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);

    let cfg = SamplerConfig { n, m, e, p: 0.5 };
    let graph = match biregular(n, cfg.object_degree(), m, e, &mut rng) {
        Ok(g) => g,
        Err(err) => {
            eprintln!("cannot pair {n} objects with {m} contexts of degree {e}: {err}");
            std::process::exit(err.exit_code());
        }
    };
    println!("{} edges, object degrees {:?}", graph.edges.len(), graph.object_degrees());
    println!("context degrees {:?}", graph.context_degrees());

    let exemplars =
        load_exemplars("assets/font".as_ref(), 10, &ExemplarOptions { side: Some(28), channels: 1, background_key: None })?;
    let aug = AugmentParams::mnist();
    let samples = sparse_ci_sample(
        |r: &mut ChaCha8Rng| {
            let ex = &exemplars[r.gen_range(0..exemplars.len())];
            Ok((sample_object(ex, &aug, r)?.image, ex.class_id))
        },
        |r| uniform_noise_image(28, 28, 1, r),
        |o: &Image, c: &Image| composite(o, c),
        &cfg,
        &mut rng,
    )?;

    let out = std::path::PathBuf::from("target/examples-out/pairing");
    std::fs::create_dir_all(&out).map_err(|err| ctxforge::Error::io(&out, err))?;
    for (i, s) in samples.iter().enumerate() {
        save_png(&s.input, &out.join(format!("{i:03}_obj{}_ctx{}_label{}.png", s.object, s.context, s.label)))?;
    }
    println!("{} composites in {}", samples.len(), out.display());
    Ok(())
}
