//! Central finite differences against the analytic backward pass, in f64.
//!
//! Each parameterized layer gets its own probes; since a layer's parameter
//! gradient is only correct when every layer above it passes the correct
//! input gradient down, this also exercises the input gradients of the
//! parameter-free layers. The network input gradient closes the chain.

use ctxforge::tensor::{Architecture, LayerKind, Mode, ModelSpec, Network, Tensor, Want};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DELTA: f64 = 1e-5;
pub const PROBES: usize = 20;
pub const TOL: f64 = 1e-3;

/// Relative error with an absolute floor: parameters whose gradient is
/// exactly zero still see ~1e-11 of roundoff in the central difference.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Central difference, or `None` when the one-sided differences disagree,
/// which means the step crosses a ReLU or max-pool kink.
pub fn central(f0: f64, fp: f64, fm: f64) -> Option<f64> {
    let (fwd, bwd) = ((fp - f0) / DELTA, (f0 - fm) / DELTA);
    (rel_err(fwd, bwd) < 1e-3).then(|| (fp - fm) / (2.0 * DELTA))
}

pub fn fixture(arch: Architecture, input: [usize; 3], classes: usize, seed: u64) -> (Network<f64>, Tensor<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = ModelSpec::new(arch, input, classes).unwrap();
    let mut net = Network::<f64>::init(spec, &mut rng);
    // Random BN affine parameters and running statistics.
    for l in net.spec().layers.clone() {
        if let LayerKind::BatchNorm { channels } = l.kind {
            let p = net.params_mut();
            for i in 0..2 * channels {
                p[l.param_offset + i] = rng.gen_range(0.5..1.5) * if i < channels { 1.0 } else { 0.3 };
            }
        }
    }
    for v in net.stats_mut() {
        *v = rng.gen_range(0.5..1.5);
    }
    let batch = 3;
    let n: usize = input.iter().product::<usize>() * batch;
    let x = Tensor::new(vec![batch, input[0], input[1], input[2]], (0..n).map(|_| rng.gen::<f64>()).collect()).unwrap();
    let labels = (0..batch).map(|i| i % classes).collect();
    (net, x, labels)
}

/// Worst relative error per parameterized layer, then for the input.
pub fn check(arch: Architecture, input: [usize; 3], classes: usize, mode: Mode) -> Vec<(String, f64)> {
    let (mut net, x, labels) = fixture(arch, input, classes, 7);
    let probe = net.clone();
    let f0 = probe.loss(&x, &labels, mode).unwrap();
    let bp = net.backward(&x, &labels, mode, Want::ALL).unwrap();
    let grads = bp.param_grads.unwrap();
    let input_grad = bp.input_grad.unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = Vec::new();

    for (li, layer) in probe.spec().layers.iter().enumerate() {
        let len = layer.kind.param_len();
        if len == 0 {
            continue;
        }
        let (mut max_err, mut done): (f64, usize) = (0.0, 0);
        for _ in 0..4 * PROBES {
            let i = layer.param_offset + rng.gen_range(0..len);
            let mut plus = probe.clone();
            plus.params_mut()[i] += DELTA;
            let mut minus = probe.clone();
            minus.params_mut()[i] -= DELTA;
            let Some(numeric) = central(f0, plus.loss(&x, &labels, mode).unwrap(), minus.loss(&x, &labels, mode).unwrap()) else {
                continue;
            };
            max_err = max_err.max(rel_err(grads[i], numeric));
            done += 1;
            if done == PROBES {
                break;
            }
        }
        assert_eq!(done, PROBES, "layer {li}: too many probes hit kinks");
        worst.push((format!("layer {li} ({})", layer.kind.name()), max_err));
    }

    let mut errs = Vec::new();
    while errs.len() < PROBES {
        let i = rng.gen_range(0..x.len());
        let mut xp = x.clone();
        xp.data_mut()[i] += DELTA;
        let mut xm = x.clone();
        xm.data_mut()[i] -= DELTA;
        if let Some(numeric) = central(f0, probe.loss(&xp, &labels, mode).unwrap(), probe.loss(&xm, &labels, mode).unwrap()) {
            errs.push(rel_err(input_grad.data()[i], numeric));
        }
    }
    worst.push(("input".into(), errs.iter().cloned().fold(0.0, f64::max)));

    worst
}

/// Every layer kind of both architectures, in train and eval mode.
pub fn suite() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (arch, input, classes) in [(Architecture::Mnist2Conv, [1, 10, 10], 4), (Architecture::Gtsrb5Conv, [3, 8, 8], 5)] {
        for mode in [Mode::Train, Mode::Eval] {
            out.extend(check(arch, input, classes, mode).into_iter().map(|(w, e)| (format!("{arch:?} {mode:?} {w}"), e)));
        }
    }
    out
}

