//! Context space: biregular object/context pairing and the per-slot context
//! update used while training.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::imageops::{load_png, resize, uniform_noise_image, Image};

/// `n` objects, `m` contexts, `e` objects per context and the probability
/// `p` of keeping the last composite as the next context.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub n: usize,
    pub m: usize,
    pub e: usize,
    pub p: f64,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        check_degrees(self.n, self.m, self.e)?;
        check_probability(self.p)
    }

    /// Contexts per object, `m * e / n`.
    pub fn object_degree(&self) -> usize {
        self.m * self.e / self.n
    }
}

fn check_degrees(n: usize, m: usize, e: usize) -> Result<()> {
    if n == 0 || m == 0 || e == 0 {
        return Err(Error::input(format!("n, m and e must be positive (n={n}, m={m}, e={e})")));
    }
    if !(m * e).is_multiple_of(n) {
        return Err(Error::input(format!(
            "n must divide m*e for a biregular pairing: {n} does not divide {m}*{e} = {}",
            m * e
        )));
    }
    Ok(())
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::input(format!("resample probability must lie in [0, 1], got {p}")));
    }
    Ok(())
}

/// Bipartite multigraph in which every context has degree `e` and every
/// object degree `m * e / n`. Edges are `(object, context)`, grouped by
/// context: context `j` owns `edges[j*e .. (j+1)*e]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BiregularGraph {
    pub n: usize,
    pub m: usize,
    pub e: usize,
    pub edges: Vec<(usize, usize)>,
}

impl BiregularGraph {
    pub fn object_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(o, _) in &self.edges {
            d[o] += 1;
        }
        d
    }

    pub fn context_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.m];
        for &(_, c) in &self.edges {
            d[c] += 1;
        }
        d
    }
}

/// Configuration-model draw: each object is repeated `object_degree` times,
/// the slot list is shuffled and dealt `e` at a time to the contexts.
/// Parallel edges are allowed.
pub fn biregular<R: Rng + ?Sized>(n: usize, object_degree: usize, m: usize, e: usize, rng: &mut R) -> Result<BiregularGraph> {
    check_degrees(n, m, e)?;
    if object_degree * n != m * e {
        return Err(Error::input(format!(
            "object degree {object_degree} is inconsistent with m*e/n = {}",
            m * e / n
        )));
    }
    let mut slots: Vec<usize> = (0..n).flat_map(|o| std::iter::repeat_n(o, object_degree)).collect();
    slots.shuffle(rng);
    let edges = slots.into_iter().enumerate().map(|(i, o)| (o, i / e)).collect();
    Ok(BiregularGraph { n, m, e, edges })
}

/// One emitted training pair together with the edge it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct CiSample<X, L> {
    pub input: X,
    pub label: L,
    pub object: usize,
    pub context: usize,
}

/// Draws `n` objects and `m` contexts, pairs them biregularly and emits
/// `gamma(object, context)` for every edge, labeled by the object.
pub fn sparse_ci_sample<O, C, X, L, R>(
    mut object_source: impl FnMut(&mut R) -> Result<(O, L)>,
    mut context_source: impl FnMut(&mut R) -> Result<C>,
    gamma: impl Fn(&O, &C) -> Result<X>,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<CiSample<X, L>>>
where
    L: Clone,
    R: Rng + ?Sized,
{
    check_degrees(cfg.n, cfg.m, cfg.e)?;
    let objects = (0..cfg.n).map(|_| object_source(rng)).collect::<Result<Vec<_>>>()?;
    let contexts = (0..cfg.m).map(|_| context_source(rng)).collect::<Result<Vec<_>>>()?;
    let graph = biregular(cfg.n, cfg.object_degree(), cfg.m, cfg.e, rng)?;
    graph
        .edges
        .iter()
        .map(|&(o, c)| {
            Ok(CiSample { input: gamma(&objects[o].0, &contexts[c])?, label: objects[o].1.clone(), object: o, context: c })
        })
        .collect()
}

/// Loads every PNG/PNM under `dir` (not recursive) as an opaque context of
/// `side` squared pixels and `channels` channels, in file-name order.
pub fn load_context_dir(dir: &std::path::Path, side: usize, channels: usize) -> Result<Vec<Image>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::missing("context directory", dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if matches!(path.extension().and_then(|e| e.to_str()), Some("png" | "ppm" | "pgm" | "pnm")) {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::dataset(format!("no images in context directory {}", dir.display())));
    }
    files.iter().map(|f| resize(&load_png(f)?.without_alpha().to_channels(channels)?, side, side)).collect()
}

/// Per slot: keep the slot's last composite with probability `p`, otherwise
/// draw fresh uniform noise shaped like the current context.
pub fn context_update<R: Rng + ?Sized>(current: &[Image], last: &[Image], p: f64, rng: &mut R) -> Result<Vec<Image>> {
    check_probability(p)?;
    if current.len() != last.len() {
        return Err(Error::input(format!("{} contexts but {} composites", current.len(), last.len())));
    }
    current
        .iter()
        .zip(last)
        .map(|(c, x)| {
            if rng.gen::<f64>() < p {
                Ok(x.clone())
            } else {
                uniform_noise_image(c.height(), c.width(), c.channels(), rng)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    #[test]
    fn degree_examples() {
        let g = biregular(4, 1, 2, 2, &mut rng()).unwrap();
        assert_eq!(g.context_degrees(), [2, 2]);
        assert_eq!(g.object_degrees(), [1, 1, 1, 1]);
        let g = biregular(2, 2, 4, 1, &mut rng()).unwrap();
        assert_eq!(g.object_degrees(), [2, 2]);
        assert_eq!(g.edges.len(), 4);
        let err = biregular(3, 1, 2, 2, &mut rng()).unwrap_err();
        assert!(err.to_string().contains("does not divide"), "{err}");
        assert!(biregular(4, 2, 2, 2, &mut rng()).is_err());
    }

    #[test]
    fn single_edge_sample() {
        let cfg = SamplerConfig { n: 1, m: 1, e: 1, p: 0.5 };
        let out = sparse_ci_sample(|_| Ok((10, 'a')), |_| Ok(5), |o, c| Ok(o + c), &cfg, &mut rng()).unwrap();
        assert_eq!(out, [CiSample { input: 15, label: 'a', object: 0, context: 0 }]);
    }

    #[test]
    fn update_extremes_and_rate() {
        let ctx: Vec<Image> = (0..1000).map(|_| Image::filled(2, 2, 1, 0.25).unwrap()).collect();
        let last: Vec<Image> = (0..1000).map(|_| Image::filled(2, 2, 1, 0.75).unwrap()).collect();
        assert_eq!(context_update(&ctx, &last, 1.0, &mut rng()).unwrap(), last);
        let fresh = context_update(&ctx, &last, 0.0, &mut rng()).unwrap();
        assert!(fresh.iter().all(|c| c != &last[0]));
        let mixed = context_update(&ctx, &last, 0.5, &mut rng()).unwrap();
        let kept = mixed.iter().filter(|c| *c == &last[0]).count() as f64 / 1000.0;
        assert!((0.45..=0.55).contains(&kept), "kept {kept}");
        assert!(context_update(&ctx, &last, 1.5, &mut rng()).is_err());
        assert!(context_update(&ctx[..3], &last, 0.5, &mut rng()).is_err());
    }
}
