use rayon::prelude::*;

use super::round::batch_tensor;
use crate::data::TestSet;
use crate::error::{Error, Result};
use crate::tensor::{Mode, Network, Real};

/// Accuracy and mean negative log-likelihood on a labeled set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
    pub count: usize,
}

const CHUNK: usize = 250;

/// Where batch norm takes its statistics from during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BnStats {
    /// Running statistics accumulated in training (the normal eval mode).
    #[default]
    Running,
    /// Statistics of each evaluation chunk of 250 images. This looks at the
    /// unlabeled evaluation inputs, so it is a transductive diagnostic.
    Batch,
}

/// Eval-mode accuracy (first maximal log-probability wins) and mean loss.
pub fn evaluate<T: Real>(net: &Network<T>, set: &TestSet) -> Result<Evaluation> {
    evaluate_with(net, set, BnStats::Running)
}

/// [`evaluate`] with a choice of batch-norm statistics.
pub fn evaluate_with<T: Real>(net: &Network<T>, set: &TestSet, bn: BnStats) -> Result<Evaluation> {
    if set.is_empty() {
        return Err(Error::input("cannot evaluate on an empty set"));
    }
    let classes = net.spec().classes;
    if set.classes > classes {
        return Err(Error::config(format!("set has {} classes but the model predicts {classes}", set.classes)));
    }
    if let Some(dims) = set.dims() {
        if dims != net.spec().input {
            return Err(Error::config(format!(
                "set images are {dims:?} but {} expects {:?}",
                net.spec().architecture,
                net.spec().input
            )));
        }
    }
    let mut starts: Vec<usize> = (0..set.len()).step_by(CHUNK).collect();
    if bn == BnStats::Batch && set.len() % CHUNK == 1 && starts.len() > 1 {
        // a one-image chunk has no batch statistics
        starts.pop();
    }
    let parts = starts
        .par_iter()
        .enumerate()
        .map(|(i, &start)| {
            let end = starts.get(i + 1).copied().unwrap_or(set.len());
            let x = batch_tensor::<T>(&set.images[start..end])?;
            let logp = match bn {
                BnStats::Running => net.forward(&x)?,
                BnStats::Batch => net.clone().forward_mode(&x, Mode::Train)?,
            };
            let mut correct = 0usize;
            let mut loss = 0.0f64;
            for (row, &label) in logp.data().chunks(classes).zip(&set.labels[start..end]) {
                let mut best = 0;
                for k in 1..classes {
                    if row[k] > row[best] {
                        best = k;
                    }
                }
                correct += usize::from(best == label);
                loss -= row[label].as_f64();
            }
            Ok((correct, loss))
        })
        .collect::<Result<Vec<_>>>()?;
    let (correct, loss) = parts.iter().fold((0, 0.0), |(c, l), &(pc, pl)| (c + pc, l + pl));
    Ok(Evaluation { accuracy: correct as f64 / set.len() as f64, mean_loss: loss / set.len() as f64, count: set.len() })
}
