//! The two classifier architectures and the network that runs them.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::batchnorm;
use super::layers::{self, ConvGeom, LayerKind};
use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Batch-norm statistics source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Which gradients a backward pass should produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Want {
    pub params: bool,
    pub input: bool,
}

impl Want {
    pub const ALL: Want = Want { params: true, input: true };
    pub const PARAMS: Want = Want { params: true, input: false };
    pub const INPUT: Want = Want { params: false, input: true };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    /// conv32 -> conv64 -> pool -> fc128 -> fc(classes), pre-activation BN.
    Mnist2Conv,
    /// Five 3x3 conv blocks (32,32,64,64,128), pools after 2, 4, 5, fc256.
    Gtsrb5Conv,
}

impl Architecture {
    pub fn tag(&self) -> &'static str {
        match self {
            Architecture::Mnist2Conv => "mnist-2conv",
            Architecture::Gtsrb5Conv => "gtsrb-5conv",
        }
    }

    pub(crate) fn code(&self) -> u32 {
        match self {
            Architecture::Mnist2Conv => 1,
            Architecture::Gtsrb5Conv => 2,
        }
    }

    pub(crate) fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(Architecture::Mnist2Conv),
            2 => Some(Architecture::Gtsrb5Conv),
            _ => None,
        }
    }

    /// Input shape and class count of the benchmark the architecture targets.
    pub fn standard_io(&self) -> ([usize; 3], usize) {
        match self {
            Architecture::Mnist2Conv => ([1, 28, 28], 10),
            Architecture::Gtsrb5Conv => ([3, 32, 32], 43),
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist-2conv" => Ok(Architecture::Mnist2Conv),
            "gtsrb-5conv" => Ok(Architecture::Gtsrb5Conv),
            other => Err(Error::config(format!(
                "unknown architecture `{other}` (expected mnist-2conv or gtsrb-5conv)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub input: [usize; 3],
    pub output: [usize; 3],
    pub param_offset: usize,
    pub stat_offset: usize,
}

impl LayerSpec {
    fn params<'a, T>(&self, all: &'a [T]) -> &'a [T] {
        &all[self.param_offset..self.param_offset + self.kind.param_len()]
    }

    fn stats<'a, T>(&self, all: &'a [T]) -> &'a [T] {
        &all[self.stat_offset..self.stat_offset + self.kind.stat_len()]
    }
}

/// Layer list with resolved shapes and parameter offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub input: [usize; 3],
    pub classes: usize,
    pub layers: Vec<LayerSpec>,
    pub param_count: usize,
    pub stat_count: usize,
}

impl ModelSpec {
    /// Standard configuration of an architecture.
    pub fn standard(architecture: Architecture) -> Self {
        let (input, classes) = architecture.standard_io();
        Self::new(architecture, input, classes).expect("standard model shapes compose")
    }

    pub fn new(architecture: Architecture, input: [usize; 3], classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::config("a classifier needs at least 2 classes"));
        }
        let conv = |i, o, padding| LayerKind::Conv2d {
            in_channels: i,
            out_channels: o,
            kernel: 3,
            padding,
            bias: false,
        };
        let bn = |c| LayerKind::BatchNorm { channels: c };
        let [c, h, w] = input;
        let mut kinds = Vec::new();
        let flat = match architecture {
            Architecture::Mnist2Conv => {
                kinds.extend([conv(c, 32, 0), bn(32), LayerKind::Relu]);
                kinds.extend([conv(32, 64, 0), bn(64), LayerKind::Relu, LayerKind::MaxPool2]);
                if h < 6 || w < 6 {
                    return Err(Error::config(format!("mnist-2conv needs at least 6x6 input, got {h}x{w}")));
                }
                64 * ((h - 4) / 2) * ((w - 4) / 2)
            }
            Architecture::Gtsrb5Conv => {
                let widths = [c, 32, 32, 64, 64, 128];
                for block in 0..5 {
                    kinds.extend([conv(widths[block], widths[block + 1], 1), bn(widths[block + 1]), LayerKind::Relu]);
                    if matches!(block, 1 | 3 | 4) {
                        kinds.push(LayerKind::MaxPool2);
                    }
                }
                if h < 8 || w < 8 {
                    return Err(Error::config(format!("gtsrb-5conv needs at least 8x8 input, got {h}x{w}")));
                }
                128 * (h / 8) * (w / 8)
            }
        };
        let hidden = match architecture {
            Architecture::Mnist2Conv => 128,
            Architecture::Gtsrb5Conv => 256,
        };
        kinds.extend([
            LayerKind::Flatten,
            LayerKind::Linear { inputs: flat, outputs: hidden, bias: false },
            bn(hidden),
            LayerKind::Relu,
            LayerKind::Linear { inputs: hidden, outputs: classes, bias: true },
            LayerKind::LogSoftmax,
        ]);
        Self::from_layers(architecture, input, classes, kinds)
    }

    fn from_layers(architecture: Architecture, input: [usize; 3], classes: usize, kinds: Vec<LayerKind>) -> Result<Self> {
        let mut layers = Vec::with_capacity(kinds.len());
        let (mut shape, mut p, mut s) = (input, 0, 0);
        for kind in kinds {
            let output = kind.output_dims(shape)?;
            layers.push(LayerSpec { kind, input: shape, output, param_offset: p, stat_offset: s });
            p += kind.param_len();
            s += kind.stat_len();
            shape = output;
        }
        if shape != [classes, 1, 1] {
            return Err(Error::config(format!("model ends in {shape:?}, expected {classes} classes")));
        }
        Ok(Self { architecture, input, classes, layers, param_count: p, stat_count: s })
    }
}

/// Per-layer values kept from the forward pass for backpropagation.
enum Aux<T> {
    None,
    BatchNormTrain { xhat: Vec<T>, inv_std: Vec<T> },
    MaxPool { arg: Vec<u32> },
}

struct Pass<T> {
    /// `acts[i]` is the input of layer `i`; the last entry is the output.
    acts: Vec<Vec<T>>,
    aux: Vec<Aux<T>>,
    new_stats: Option<Vec<T>>,
    batch: usize,
}

/// Output of [`Network::backward`].
#[derive(Debug, Clone)]
pub struct Backprop<T> {
    /// Mean negative log-likelihood over the batch.
    pub loss: T,
    pub log_probs: Tensor<T>,
    pub param_grads: Option<Vec<T>>,
    pub input_grad: Option<Tensor<T>>,
}

/// Parameters and running statistics for a [`ModelSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    spec: ModelSpec,
    params: Vec<T>,
    stats: Vec<T>,
    bn_momentum: T,
    bn_eps: T,
}

impl<T: Real> Network<T> {
    pub const DEFAULT_BN_MOMENTUM: f64 = 0.1;
    pub const DEFAULT_BN_EPS: f64 = 1e-5;

    /// Kaiming-uniform (fan-in) weights, `U(-1/sqrt(fan_in), ..)` biases,
    /// unit gamma and zero beta. Values are drawn in f64 so 32- and 64-bit
    /// networks built from one seed agree.
    pub fn init<R: Rng + ?Sized>(spec: ModelSpec, rng: &mut R) -> Self {
        let mut params = vec![T::zero(); spec.param_count];
        let mut stats = vec![T::zero(); spec.stat_count];
        for layer in &spec.layers {
            let p = &mut params[layer.param_offset..layer.param_offset + layer.kind.param_len()];
            match layer.kind {
                LayerKind::Conv2d { out_channels: outputs, .. } | LayerKind::Linear { outputs, .. } => {
                    let fan_in = layer.kind.fan_in() as f64;
                    let n_weights = layer.kind.fan_in() * outputs;
                    let bound = (6.0 / fan_in).sqrt();
                    for v in p[..n_weights].iter_mut() {
                        *v = T::from_f64(rng.gen_range(-bound..bound));
                    }
                    let bias_bound = 1.0 / fan_in.sqrt();
                    for v in p[n_weights..].iter_mut() {
                        *v = T::from_f64(rng.gen_range(-bias_bound..bias_bound));
                    }
                }
                LayerKind::BatchNorm { channels } => {
                    p[..channels].fill(T::one());
                    stats[layer.stat_offset + channels..layer.stat_offset + 2 * channels].fill(T::one());
                }
                _ => {}
            }
        }
        Self {
            spec,
            params,
            stats,
            bn_momentum: T::from_f64(Self::DEFAULT_BN_MOMENTUM),
            bn_eps: T::from_f64(Self::DEFAULT_BN_EPS),
        }
    }

    pub fn from_parts(spec: ModelSpec, params: Vec<T>, stats: Vec<T>) -> Result<Self> {
        if params.len() != spec.param_count || stats.len() != spec.stat_count {
            return Err(Error::config(format!(
                "{} expects {} parameters and {} statistics, got {} and {}",
                spec.architecture,
                spec.param_count,
                spec.stat_count,
                params.len(),
                stats.len()
            )));
        }
        Ok(Self {
            spec,
            params,
            stats,
            bn_momentum: T::from_f64(Self::DEFAULT_BN_MOMENTUM),
            bn_eps: T::from_f64(Self::DEFAULT_BN_EPS),
        })
    }

    pub fn with_bn_momentum(mut self, momentum: f64) -> Self {
        self.bn_momentum = T::from_f64(momentum);
        self
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn stats(&self) -> &[T] {
        &self.stats
    }

    pub fn stats_mut(&mut self) -> &mut [T] {
        &mut self.stats
    }

    /// Same network in another precision.
    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            spec: self.spec.clone(),
            params: self.params.iter().map(|v| U::from_f64(v.as_f64())).collect(),
            stats: self.stats.iter().map(|v| U::from_f64(v.as_f64())).collect(),
            bn_momentum: U::from_f64(self.bn_momentum.as_f64()),
            bn_eps: U::from_f64(self.bn_eps.as_f64()),
        }
    }

    /// Zeroes the weights and bias of the final linear layer, which makes
    /// every prediction uniform.
    pub fn zero_head(&mut self) {
        if let Some(layer) = self.spec.layers.iter().rev().find(|l| matches!(l.kind, LayerKind::Linear { .. })) {
            let range = layer.param_offset..layer.param_offset + layer.kind.param_len();
            self.params[range].fill(T::zero());
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<usize> {
        let expect = self.spec.input;
        if x.shape().len() != 4 || x.shape()[1..] != expect {
            return Err(Error::config(format!(
                "{} expects input [B, {}, {}, {}], got {:?}",
                self.spec.architecture,
                expect[0],
                expect[1],
                expect[2],
                x.shape()
            )));
        }
        Ok(x.batch())
    }

    fn pass(&self, x: &Tensor<T>, mode: Mode) -> Result<Pass<T>> {
        let batch = self.check_input(x)?;
        let mut acts: Vec<Vec<T>> = Vec::with_capacity(self.spec.layers.len() + 1);
        let mut aux = Vec::with_capacity(self.spec.layers.len());
        let mut new_stats = (mode == Mode::Train).then(|| self.stats.clone());
        acts.push(x.data().to_vec());
        for (idx, layer) in self.spec.layers.iter().enumerate() {
            let input = acts.last().expect("input activation");
            let p = layer.params(&self.params);
            let (out, a) = match layer.kind {
                LayerKind::Conv2d { out_channels, kernel, padding, bias, .. } => {
                    let g = ConvGeom::new(layer.input, out_channels, kernel, padding);
                    let nw = out_channels * layer.kind.fan_in();
                    let b = bias.then(|| &p[nw..]);
                    (layers::conv_forward(input, batch, &g, &p[..nw], b), Aux::None)
                }
                LayerKind::BatchNorm { channels } => {
                    let spatial = layer.input[1] * layer.input[2];
                    let (gamma, beta) = p.split_at(channels);
                    match mode {
                        Mode::Train => {
                            let fwd = batchnorm::train_forward(input, batch, channels, spatial, gamma, beta, self.bn_eps)?;
                            if let Some(st) = new_stats.as_mut() {
                                let (m, v) = st[layer.stat_offset..layer.stat_offset + 2 * channels].split_at_mut(channels);
                                batchnorm::update_running(m, v, &fwd, batch * spatial, self.bn_momentum);
                            }
                            (fwd.y, Aux::BatchNormTrain { xhat: fwd.xhat, inv_std: fwd.inv_std })
                        }
                        Mode::Eval => {
                            let (m, v) = layer.stats(&self.stats).split_at(channels);
                            let y = batchnorm::eval_forward(input, batch, channels, spatial, gamma, beta, m, v, self.bn_eps);
                            (y, Aux::None)
                        }
                    }
                }
                LayerKind::Relu => (layers::relu_forward(input), Aux::None),
                LayerKind::MaxPool2 => {
                    let (y, arg) = layers::maxpool_forward(input, batch, layer.input);
                    (y, Aux::MaxPool { arg })
                }
                LayerKind::Flatten => (input.clone(), Aux::None),
                LayerKind::Linear { inputs, outputs, bias } => {
                    let b = bias.then(|| &p[inputs * outputs..]);
                    (layers::linear_forward(input, batch, inputs, outputs, &p[..inputs * outputs], b), Aux::None)
                }
                LayerKind::LogSoftmax => (layers::log_softmax_forward(input, layer.input[0]), Aux::None),
            };
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::numerical(
                    format!("layer {idx} ({})", layer.kind.name()),
                    "non-finite activation",
                ));
            }
            acts.push(out);
            aux.push(a);
        }
        Ok(Pass { acts, aux, new_stats, batch })
    }

    fn output_tensor(&self, pass: &Pass<T>) -> Result<Tensor<T>> {
        let out = pass.acts.last().expect("output activation").clone();
        Tensor::new(vec![pass.batch, self.spec.classes], out)
    }

    /// Eval-mode forward pass: log-probabilities `[B, classes]`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let pass = self.pass(x, Mode::Eval)?;
        self.output_tensor(&pass)
    }

    /// Forward pass in either mode; train mode updates running statistics.
    pub fn forward_mode(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let pass = self.pass(x, mode)?;
        if let Some(stats) = pass.new_stats.as_ref() {
            self.stats.clone_from(stats);
        }
        self.output_tensor(&pass)
    }

    /// Forward and backward with the mean NLL loss. Train mode updates the
    /// running statistics.
    pub fn backward(&mut self, x: &Tensor<T>, labels: &[usize], mode: Mode, want: Want) -> Result<Backprop<T>> {
        let (bp, new_stats) = self.backward_inner(x, labels, mode, want)?;
        if let Some(stats) = new_stats {
            self.stats = stats;
        }
        Ok(bp)
    }

    /// Eval-mode loss and input gradient against an immutable snapshot.
    pub fn input_gradient(&self, x: &Tensor<T>, labels: &[usize]) -> Result<Backprop<T>> {
        self.backward_inner(x, labels, Mode::Eval, Want::INPUT).map(|(bp, _)| bp)
    }

    /// Loss only, eval or train statistics, without touching the network.
    pub fn loss(&self, x: &Tensor<T>, labels: &[usize], mode: Mode) -> Result<T> {
        let pass = self.pass(x, mode)?;
        self.check_labels(labels, pass.batch)?;
        Ok(nll(pass.acts.last().expect("output"), labels, self.spec.classes))
    }

    fn check_labels(&self, labels: &[usize], batch: usize) -> Result<()> {
        if labels.len() != batch {
            return Err(Error::input(format!("{} labels for a batch of {batch}", labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.spec.classes) {
            return Err(Error::input(format!("label {bad} outside [0, {})", self.spec.classes)));
        }
        Ok(())
    }

    fn backward_inner(
        &self,
        x: &Tensor<T>,
        labels: &[usize],
        mode: Mode,
        want: Want,
    ) -> Result<(Backprop<T>, Option<Vec<T>>)> {
        let batch = self.check_input(x)?;
        self.check_labels(labels, batch)?;
        let pass = self.pass(x, mode)?;
        let classes = self.spec.classes;
        let logp = pass.acts.last().expect("output");
        let loss = nll(logp, labels, classes);

        let scale = T::one() / T::from_f64(batch as f64);
        let mut grad = vec![T::zero(); logp.len()];
        for (b, &l) in labels.iter().enumerate() {
            grad[b * classes + l] = -scale;
        }
        let mut dparams = want.params.then(|| vec![T::zero(); self.spec.param_count]);

        // Skip work below the first layer whose parameters are needed when
        // only parameter gradients were requested.
        let first_param_layer = self.spec.layers.iter().position(|l| l.kind.param_len() > 0).unwrap_or(0);
        for (idx, layer) in self.spec.layers.iter().enumerate().rev() {
            let need_input = want.input || idx > first_param_layer;
            let input = &pass.acts[idx];
            let output = &pass.acts[idx + 1];
            let p = layer.params(&self.params);
            let dp = dparams
                .as_mut()
                .map(|d| &mut d[layer.param_offset..layer.param_offset + layer.kind.param_len()]);
            let next = match layer.kind {
                LayerKind::Conv2d { out_channels, kernel, padding, .. } => {
                    let g = ConvGeom::new(layer.input, out_channels, kernel, padding);
                    let nw = out_channels * layer.kind.fan_in();
                    layers::conv_backward(input, &grad, batch, &g, &p[..nw], dp, need_input)
                }
                LayerKind::BatchNorm { channels } => {
                    let spatial = layer.input[1] * layer.input[2];
                    match &pass.aux[idx] {
                        Aux::BatchNormTrain { xhat, inv_std } => Some(batchnorm::train_backward(
                            &grad, xhat, inv_std, &p[..channels], batch, channels, spatial, dp,
                        )),
                        _ => {
                            let (m, v) = layer.stats(&self.stats).split_at(channels);
                            batchnorm::eval_backward(
                                input, &grad, &p[..channels], m, v, self.bn_eps, batch, channels, spatial, dp, need_input,
                            )
                        }
                    }
                }
                LayerKind::Relu => Some(layers::relu_backward(output, &grad)),
                LayerKind::MaxPool2 => match &pass.aux[idx] {
                    Aux::MaxPool { arg } => Some(layers::maxpool_backward(&grad, arg, input.len())),
                    _ => unreachable!("maxpool forward records argmax"),
                },
                LayerKind::Flatten => Some(grad.clone()),
                LayerKind::Linear { inputs, outputs, .. } => {
                    layers::linear_backward(input, &grad, batch, inputs, outputs, &p[..inputs * outputs], dp, need_input)
                }
                LayerKind::LogSoftmax => Some(layers::log_softmax_backward(output, &grad, layer.input[0])),
            };
            match next {
                Some(g) => {
                    if g.iter().any(|v| !v.is_finite()) {
                        return Err(Error::numerical(
                            format!("layer {idx} ({})", layer.kind.name()),
                            "non-finite gradient",
                        ));
                    }
                    grad = g;
                }
                None => break,
            }
            if !need_input && idx == first_param_layer {
                break;
            }
        }

        let input_grad = if want.input {
            Some(Tensor::new(x.shape().to_vec(), grad)?)
        } else {
            None
        };
        let bp = Backprop {
            loss,
            log_probs: Tensor::new(vec![batch, classes], logp.clone())?,
            param_grads: dparams,
            input_grad,
        };
        Ok((bp, pass.new_stats))
    }
}

fn nll<T: Real>(logp: &[T], labels: &[usize], classes: usize) -> T {
    let total: T = labels.iter().enumerate().map(|(b, &l)| -logp[b * classes + l]).sum();
    total / T::from_f64(labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn standard_parameter_counts() {
        let mnist = ModelSpec::standard(Architecture::Mnist2Conv);
        // 288 + 64 + 18432 + 128 + 1179648 + 256 + 1290
        assert_eq!(mnist.param_count, 1_200_106);
        assert_eq!(mnist.stat_count, 2 * (32 + 64 + 128));
        let gtsrb = ModelSpec::standard(Architecture::Gtsrb5Conv);
        // convs 864+9216+18432+36864+73728, bn 640, fc 524288, bn 512, head 11051
        assert_eq!(gtsrb.param_count, 675_595);
        assert_eq!(gtsrb.stat_count, 2 * (32 + 32 + 64 + 64 + 128 + 256));
    }

    #[test]
    fn layer_shapes_compose_and_bn_precedes_relu() {
        for arch in [Architecture::Mnist2Conv, Architecture::Gtsrb5Conv] {
            let spec = ModelSpec::standard(arch);
            for pair in spec.layers.windows(2) {
                assert_eq!(pair[0].output, pair[1].input);
                if matches!(pair[1].kind, LayerKind::Relu) {
                    assert!(matches!(pair[0].kind, LayerKind::BatchNorm { .. }));
                }
            }
        }
    }

    #[test]
    fn mnist_forward_shape_and_normalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Network::<f32>::init(ModelSpec::standard(Architecture::Mnist2Conv), &mut rng);
        let x: Vec<f32> = (0..784).map(|_| rng.gen()).collect();
        let out = net.forward(&Tensor::new(vec![1, 1, 28, 28], x).unwrap()).unwrap();
        assert_eq!(out.shape(), &[1, 10]);
        let lse: f64 = out.data().iter().map(|&v| (v as f64).exp()).sum::<f64>().ln();
        assert!(lse.abs() < 1e-5);
    }

    #[test]
    fn zero_head_gives_uniform_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = Network::<f64>::init(ModelSpec::new(Architecture::Mnist2Conv, [1, 8, 8], 4).unwrap(), &mut rng);
        net.zero_head();
        let x: Vec<f64> = (0..3 * 64).map(|_| rng.gen()).collect();
        let out = net.forward(&Tensor::new(vec![3, 1, 8, 8], x).unwrap()).unwrap();
        for &v in out.data() {
            assert!((v - (0.25f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_input_shape_is_a_config_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Network::<f32>::init(ModelSpec::standard(Architecture::Mnist2Conv), &mut rng);
        let x = Tensor::zeros(vec![1, 1, 27, 28]);
        assert!(matches!(net.forward(&x), Err(Error::Config(_))));
    }

    #[test]
    fn label_out_of_range_is_an_input_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut net = Network::<f32>::init(ModelSpec::new(Architecture::Mnist2Conv, [1, 8, 8], 3).unwrap(), &mut rng);
        let x = Tensor::zeros(vec![2, 1, 8, 8]);
        assert!(matches!(net.backward(&x, &[0, 3], Mode::Train, Want::ALL), Err(Error::Input(_))));
    }
}
