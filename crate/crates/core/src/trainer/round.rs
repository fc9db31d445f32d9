use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::TrainConfig;
use crate::context::context_update;
use crate::error::{Error, Result};
use crate::imageops::{composite, uniform_noise_image, Image};
use crate::object::{sample_object, AugmentParams, ObjectExemplar};
use crate::refine::{pgd_refine_batch, InputGradient, PgdConfig};
use crate::rng::{Purpose, SeedStream};
use crate::tensor::{adam_step, AdamState, Mode, Network, Real, Tensor, Want};

/// Everything a round needs besides the model.
#[derive(Debug, Clone, Copy)]
pub struct RoundInputs<'a> {
    pub exemplars: &'a [ObjectExemplar],
    pub aug: &'a AugmentParams,
    /// Refinement settings, used only when the mode refines.
    pub pgd: &'a PgdConfig,
    pub cfg: &'a TrainConfig,
    pub stream: SeedStream,
    /// Images fresh contexts are drawn from; empty means uniform noise.
    pub contexts: &'a [Image],
}

/// Samples of one round in pass-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundBatch {
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
    /// Composites before refinement, same order as `images`.
    pub raw: Vec<Image>,
    /// Contexts after the last pass's update.
    pub contexts: Vec<Image>,
}

/// How often each stage ran.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub renders: u64,
    pub refinements: u64,
    /// Slots whose next context is the previous composite.
    pub chained: u64,
    /// Slots whose context survived a pass untouched.
    pub reused: u64,
    pub fresh_contexts: u64,
    pub fit_steps: u64,
}

fn fresh(img: &Image, pool: &[Image], stream: &SeedStream, purpose: Purpose, round: u64, pass: u64, slot: u64) -> Result<Image> {
    let mut rng = stream.rng(purpose, round, pass, slot);
    if pool.is_empty() {
        uniform_noise_image(img.height(), img.width(), img.channels(), &mut rng)
    } else {
        Ok(pool[rng.gen_range(0..pool.len())].clone())
    }
}

/// Generates the `passes * N` samples of one round against a frozen model.
///
/// Contexts start as fresh noise. Each pass draws a permutation `pi`,
/// renders class `n` onto context `pi(n)`, optionally refines, then updates
/// the contexts according to the mode.
pub fn generate_round<M>(model: &M, inputs: &RoundInputs<'_>, round: u64, counters: &mut Counters) -> Result<RoundBatch>
where
    M: InputGradient + Sync + ?Sized,
{
    let RoundInputs { exemplars, aug, pgd, cfg, stream, contexts: pool } = *inputs;
    let n = exemplars.len();
    if n == 0 {
        return Err(Error::input("no exemplars"));
    }
    let shape = &exemplars[0].canonical;
    if let Some(bad) = pool.iter().find(|c| !c.same_shape(shape) || c.alpha().is_some()) {
        return Err(Error::input(format!(
            "context is {}x{}x{} but exemplars are {}x{}x{}",
            bad.height(),
            bad.width(),
            bad.channels(),
            shape.height(),
            shape.width(),
            shape.channels()
        )));
    }
    let flags = cfg.mode.flags();
    let mut contexts = (0..n)
        .map(|slot| fresh(shape, pool, &stream, Purpose::Context, round, 0, slot as u64))
        .collect::<Result<Vec<_>>>()?;
    counters.fresh_contexts += n as u64;
    let labels_pass: Vec<usize> = exemplars.iter().map(|e| e.class_id).collect();
    let mut out = RoundBatch { images: Vec::new(), labels: Vec::new(), raw: Vec::new(), contexts: Vec::new() };
    for pass in 0..cfg.passes as u64 {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut stream.rng(Purpose::Permutation, round, pass, 0));
        let rendered = (0..n)
            .into_par_iter()
            .map(|slot| {
                let mut rng = stream.rng(Purpose::Object, round, pass, slot as u64);
                let obj = sample_object(&exemplars[slot], aug, &mut rng)?;
                Ok((composite(&obj.image, &contexts[perm[slot]])?, obj.mask))
            })
            .collect::<Result<Vec<_>>>()?;
        counters.renders += n as u64;
        let (raw, masks): (Vec<Image>, Vec<Vec<bool>>) = rendered.into_iter().unzip();
        let refined = if flags.refine {
            let mut rngs: Vec<_> = (0..n).map(|slot| stream.rng(Purpose::Refine, round, pass, slot as u64)).collect();
            counters.refinements += n as u64;
            pgd_refine_batch(model, &raw, &labels_pass, &masks, pgd, &mut rngs)?
        } else {
            raw.clone()
        };

        if flags.chaining {
            let source = if cfg.chain_refined { &refined } else { &raw };
            for slot in 0..n {
                let mut rng = stream.rng(Purpose::ContextUpdate, round, pass, slot as u64);
                let next = context_update(&contexts[slot..=slot], &source[slot..=slot], cfg.p, &mut rng)?;
                let next = next.into_iter().next().expect("one context");
                if next == source[slot] {
                    counters.chained += 1;
                    contexts[slot] = next;
                } else {
                    counters.fresh_contexts += 1;
                    contexts[slot] = if pool.is_empty() {
                        next
                    } else {
                        fresh(shape, pool, &stream, Purpose::ContextUpdate, round, pass, slot as u64)?
                    };
                }
            }
        } else if flags.reuse && (pass + 1) % cfg.reuse_passes as u64 != 0 {
            counters.reused += n as u64;
        } else {
            for slot in 0..n {
                contexts[slot] = fresh(shape, pool, &stream, Purpose::ContextUpdate, round, pass, slot as u64)?;
            }
            counters.fresh_contexts += n as u64;
        }

        out.images.extend(refined);
        out.raw.extend(raw);
        out.labels.extend_from_slice(&labels_pass);
    }
    out.contexts = contexts;
    Ok(out)
}

/// Planar batch tensor of `images`.
pub(crate) fn batch_tensor<T: Real>(images: &[Image]) -> Result<Tensor<T>> {
    let first = images.first().ok_or_else(|| Error::input("empty batch"))?;
    let shape = vec![images.len(), first.channels(), first.height(), first.width()];
    let data = images.iter().flat_map(|im| im.to_chw()).map(T::from_f32).collect();
    Tensor::new(shape, data)
}

/// One train-mode forward/backward pass and one Adam step on the whole
/// batch. Returns the batch loss before the step.
pub fn fit<T: Real>(net: &mut Network<T>, adam: &mut AdamState<T>, images: &[Image], labels: &[usize]) -> Result<T> {
    let x = batch_tensor::<T>(images)?;
    let bp = net.backward(&x, labels, Mode::Train, Want::PARAMS)?;
    let grads = bp.param_grads.ok_or_else(|| Error::numerical("fit", "no parameter gradients"))?;
    adam_step(net.params_mut(), &grads, adam)?;
    Ok(bp.loss)
}
