mod common;

use ctxforge::data::{build_synthetic_testset, load_mnist_idx, TestSet};
use ctxforge::object::{load_exemplars, AugmentParams, ExemplarOptions};
use ctxforge::rng::{Purpose, SeedStream};
use ctxforge::tensor::{read_checkpoint, write_checkpoint, AdamState, Architecture, Checkpoint, ModelSpec, Network};
use ctxforge::trainer::evaluate;

fn digits() -> TestSet {
    if let Some(root) = std::env::var_os("CTXFORGE_DATA").map(|d| std::path::PathBuf::from(d).join("mnist")) {
        if let Ok(set) = load_mnist_idx(&root.join("t10k-images-idx3-ubyte"), &root.join("t10k-labels-idx1-ubyte")) {
            let keep = 2000;
            return TestSet::new(set.images[..keep].to_vec(), set.labels[..keep].to_vec(), set.source, 10).unwrap();
        }
    }
    let opts = ExemplarOptions { side: Some(28), channels: 1, background_key: None };
    let ex = load_exemplars(&common::repo_root().join("assets/font"), 10, &opts).unwrap();
    build_synthetic_testset(&ex, &AugmentParams::mnist(), 1000, 4).unwrap()
}

#[test]
fn fresh_network_scores_near_chance() {
    let set = digits();
    let spec = ModelSpec::standard(Architecture::Mnist2Conv);
    let accs: Vec<f64> = (0..5)
        .map(|seed| {
            let net = Network::<f32>::init(spec.clone(), &mut SeedStream::new(seed).rng(Purpose::Init, 0, 0, 0));
            evaluate(&net, &set).unwrap().accuracy
        })
        .collect();
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    assert!((mean - 0.10).abs() <= 0.03, "{:?} on {:?}: mean {mean}", accs, set.source);
}

#[test]
fn saved_checkpoint_scores_the_same() {
    let set = digits();
    let spec = ModelSpec::standard(Architecture::Mnist2Conv);
    let net = Network::<f32>::init(spec, &mut SeedStream::new(9).rng(Purpose::Init, 0, 0, 0));
    let adam = AdamState::new(net.params().len(), 1e-4, 1e-4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.ckpt");
    write_checkpoint(&path, &Checkpoint::capture(&net, &adam)).unwrap();
    let back: Network<f32> = read_checkpoint(&path).unwrap().network().unwrap();
    assert_eq!(evaluate(&net, &set).unwrap(), evaluate(&back, &set).unwrap());
}
