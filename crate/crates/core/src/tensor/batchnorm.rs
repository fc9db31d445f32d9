//! Per-channel batch normalization over the batch and spatial axes.

use super::{Mode, Real, Tensor};
use crate::error::{Error, Result};

/// Running statistics of one batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState<T> {
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    /// Weight of the newest batch in the running averages.
    pub momentum: T,
    pub eps: T,
    pub mode: Mode,
}

impl<T: Real> BatchNormState<T> {
    pub fn new(channels: usize, momentum: T, eps: T) -> Self {
        Self {
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum,
            eps,
            mode: Mode::Train,
        }
    }
}

/// Normalizes `x` (`[batch, channels, ...]`) with `gamma`/`beta`.
///
/// In train mode the batch statistics are used and the running statistics
/// are updated; in eval mode only the running statistics are read.
pub fn batchnorm_apply<T: Real>(
    x: &Tensor<T>,
    state: &mut BatchNormState<T>,
    gamma: &[T],
    beta: &[T],
) -> Result<Tensor<T>> {
    let [c, h, w] = x.sample_dims();
    let channels = state.running_mean.len();
    if c != channels || gamma.len() != channels || beta.len() != channels || state.running_var.len() != channels {
        return Err(Error::config(format!(
            "batchnorm over {channels} channels given input with {c} channels"
        )));
    }
    let batch = x.batch();
    let data = match state.mode {
        Mode::Train => {
            let fwd = train_forward(x.data(), batch, c, h * w, gamma, beta, state.eps)?;
            update_running(&mut state.running_mean, &mut state.running_var, &fwd, batch * h * w, state.momentum);
            fwd.y
        }
        Mode::Eval => eval_forward(
            x.data(),
            batch,
            c,
            h * w,
            gamma,
            beta,
            &state.running_mean,
            &state.running_var,
            state.eps,
        ),
    };
    Tensor::new(x.shape().to_vec(), data)
}

pub(crate) struct TrainForward<T> {
    pub y: Vec<T>,
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    /// Biased (population) variance of the batch.
    pub var: Vec<T>,
}

pub(crate) fn train_forward<T: Real>(
    x: &[T],
    batch: usize,
    channels: usize,
    spatial: usize,
    gamma: &[T],
    beta: &[T],
    eps: T,
) -> Result<TrainForward<T>> {
    if batch < 2 {
        return Err(Error::config("batchnorm in train mode needs a batch of at least 2"));
    }
    let count = T::from_f64((batch * spatial) as f64);
    let mut mean = vec![T::zero(); channels];
    let mut var = vec![T::zero(); channels];
    for b in 0..batch {
        for ch in 0..channels {
            let s = &x[(b * channels + ch) * spatial..(b * channels + ch + 1) * spatial];
            mean[ch] += s.iter().copied().sum::<T>();
        }
    }
    for m in mean.iter_mut() {
        *m = *m / count;
    }
    for b in 0..batch {
        for ch in 0..channels {
            let s = &x[(b * channels + ch) * spatial..(b * channels + ch + 1) * spatial];
            let mu = mean[ch];
            var[ch] += s.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>();
        }
    }
    for v in var.iter_mut() {
        *v = *v / count;
    }
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut xhat = vec![T::zero(); x.len()];
    let mut y = vec![T::zero(); x.len()];
    for b in 0..batch {
        for ch in 0..channels {
            let range = (b * channels + ch) * spatial..(b * channels + ch + 1) * spatial;
            for i in range {
                let n = (x[i] - mean[ch]) * inv_std[ch];
                xhat[i] = n;
                y[i] = gamma[ch] * n + beta[ch];
            }
        }
    }
    Ok(TrainForward { y, xhat, inv_std, mean, var })
}

/// Running variance uses the unbiased batch estimate.
pub(crate) fn update_running<T: Real>(
    running_mean: &mut [T],
    running_var: &mut [T],
    fwd: &TrainForward<T>,
    count: usize,
    momentum: T,
) {
    let keep = T::one() - momentum;
    let unbias = T::from_f64(count as f64 / (count as f64 - 1.0).max(1.0));
    for ch in 0..running_mean.len() {
        running_mean[ch] = keep * running_mean[ch] + momentum * fwd.mean[ch];
        running_var[ch] = keep * running_var[ch] + momentum * fwd.var[ch] * unbias;
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn eval_forward<T: Real>(
    x: &[T],
    batch: usize,
    channels: usize,
    spatial: usize,
    gamma: &[T],
    beta: &[T],
    mean: &[T],
    var: &[T],
    eps: T,
) -> Vec<T> {
    let mut y = vec![T::zero(); x.len()];
    for ch in 0..channels {
        let scale = gamma[ch] / (var[ch] + eps).sqrt();
        let shift = beta[ch] - mean[ch] * scale;
        for b in 0..batch {
            let range = (b * channels + ch) * spatial..(b * channels + ch + 1) * spatial;
            for i in range {
                y[i] = x[i] * scale + shift;
            }
        }
    }
    y
}

/// Backward through train-mode normalization. `dparams` receives
/// `[dgamma | dbeta]` accumulations.
#[allow(clippy::too_many_arguments)]
pub(crate) fn train_backward<T: Real>(
    dy: &[T],
    xhat: &[T],
    inv_std: &[T],
    gamma: &[T],
    batch: usize,
    channels: usize,
    spatial: usize,
    dparams: Option<&mut [T]>,
) -> Vec<T> {
    let count = T::from_f64((batch * spatial) as f64);
    let mut sum_dy = vec![T::zero(); channels];
    let mut sum_dy_xhat = vec![T::zero(); channels];
    for b in 0..batch {
        for ch in 0..channels {
            let range = (b * channels + ch) * spatial..(b * channels + ch + 1) * spatial;
            for i in range {
                sum_dy[ch] += dy[i];
                sum_dy_xhat[ch] += dy[i] * xhat[i];
            }
        }
    }
    if let Some(dp) = dparams {
        for ch in 0..channels {
            dp[ch] += sum_dy_xhat[ch];
            dp[channels + ch] += sum_dy[ch];
        }
    }
    let mut dx = vec![T::zero(); dy.len()];
    for b in 0..batch {
        for ch in 0..channels {
            let k = gamma[ch] * inv_std[ch] / count;
            let range = (b * channels + ch) * spatial..(b * channels + ch + 1) * spatial;
            for i in range {
                dx[i] = k * (count * dy[i] - sum_dy[ch] - xhat[i] * sum_dy_xhat[ch]);
            }
        }
    }
    dx
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn eval_backward<T: Real>(
    x: &[T],
    dy: &[T],
    gamma: &[T],
    mean: &[T],
    var: &[T],
    eps: T,
    batch: usize,
    channels: usize,
    spatial: usize,
    dparams: Option<&mut [T]>,
    want_input: bool,
) -> Option<Vec<T>> {
    let inv: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    if let Some(dp) = dparams {
        for b in 0..batch {
            for ch in 0..channels {
                let range = (b * channels + ch) * spatial..(b * channels + ch + 1) * spatial;
                for i in range {
                    dp[ch] += dy[i] * (x[i] - mean[ch]) * inv[ch];
                    dp[channels + ch] += dy[i];
                }
            }
        }
    }
    want_input.then(|| {
        let mut dx = vec![T::zero(); dy.len()];
        for b in 0..batch {
            for ch in 0..channels {
                let k = gamma[ch] * inv[ch];
                let range = (b * channels + ch) * spatial..(b * channels + ch + 1) * spatial;
                for i in range {
                    dx[i] = dy[i] * k;
                }
            }
        }
        dx
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_input() -> Tensor<f64> {
        let data: Vec<f64> = (0..2 * 3 * 4).map(|i| ((i * 37) % 17) as f64 * 0.3 - 1.0).collect();
        Tensor::new(vec![2, 3, 2, 2], data).unwrap()
    }

    #[test]
    fn train_mode_output_is_standardized() {
        let x = sample_input();
        let mut st = BatchNormState::new(3, 0.1, 1e-5);
        let y = batchnorm_apply(&x, &mut st, &[1.0; 3], &[0.0; 3]).unwrap();
        for ch in 0..3 {
            let vals: Vec<f64> = (0..2)
                .flat_map(|b| y.data()[(b * 3 + ch) * 4..(b * 3 + ch + 1) * 4].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / 8.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
            assert!(mean.abs() < 1e-4);
            assert!((var - 1.0).abs() < 1e-3, "variance {var}");
        }
        assert!(st.running_mean.iter().any(|&m| m != 0.0));
        assert!(st.running_var.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn constant_channel_normalizes_to_zero() {
        let x = Tensor::new(vec![4, 1, 2, 2], vec![0.7f64; 16]).unwrap();
        let mut st = BatchNormState::new(1, 0.1, 1e-5);
        let y = batchnorm_apply(&x, &mut st, &[1.0], &[0.0]).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eval_mode_matches_closed_form() {
        let x = sample_input();
        let mut st = BatchNormState::new(3, 0.1, 1e-5);
        st.mode = Mode::Eval;
        st.running_mean = vec![0.5, -0.25, 1.0];
        st.running_var = vec![2.0, 0.5, 1.5];
        let gamma = [1.5, 0.5, -1.0];
        let beta = [0.1, 0.2, 0.3];
        let y = batchnorm_apply(&x, &mut st, &gamma, &beta).unwrap();
        for (i, (&xv, &yv)) in x.data().iter().zip(y.data()).enumerate() {
            let ch = (i / 4) % 3;
            let expect = (xv - st.running_mean[ch]) / (st.running_var[ch] + 1e-5).sqrt() * gamma[ch] + beta[ch];
            assert!((yv - expect).abs() < 1e-12);
        }
        // eval mode leaves the statistics alone
        assert_eq!(st.running_mean, vec![0.5, -0.25, 1.0]);
    }

    #[test]
    fn single_sample_train_batch_is_rejected() {
        let x = Tensor::new(vec![1, 2, 2, 2], vec![0.1f32; 8]).unwrap();
        let mut st = BatchNormState::new(2, 0.1, 1e-5);
        assert!(matches!(batchnorm_apply(&x, &mut st, &[1.0; 2], &[0.0; 2]), Err(Error::Config(_))));
    }

    #[test]
    fn running_stats_follow_momentum() {
        let x = Tensor::new(vec![2, 1, 1, 1], vec![1.0f64, 3.0]).unwrap();
        let mut st = BatchNormState::new(1, 0.1, 1e-5);
        batchnorm_apply(&x, &mut st, &[1.0], &[0.0]).unwrap();
        // batch mean 2, unbiased variance 2
        assert!((st.running_mean[0] - 0.2).abs() < 1e-12);
        assert!((st.running_var[0] - (0.9 + 0.2)).abs() < 1e-12);
    }
}
