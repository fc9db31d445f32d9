//! Versioned binary checkpoint.
//!
//! Layout (all little-endian):
//!
//! ```text
//! "CTXF" | version u32 | arch u32 | in_c u32 | in_h u32 | in_w u32 | classes u32
//! | param_count u64 | params f32 x param_count | stats f32 x stat_count
//! | adam_step u64 | lr f64 | beta1 f64 | beta2 f64 | eps f64 | weight_decay f64
//! | m f32 x param_count | v f32 x param_count
//! ```
//!
//! `stat_count` follows from the architecture and shapes.

use std::io::{Read, Write};
use std::path::Path;

use super::{AdamState, Architecture, ModelSpec, Network, Real};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CTXF";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub params: Vec<f32>,
    pub stats: Vec<f32>,
    pub adam: AdamState<f32>,
    /// Adam hyperparameters at full precision (`lr, beta1, beta2, eps, wd`).
    pub adam_hyper: [f64; 5],
}

impl Checkpoint {
    pub fn capture<T: Real>(net: &Network<T>, adam: &AdamState<T>) -> Self {
        let to32 = |v: &[T]| v.iter().map(|x| x.as_f32()).collect::<Vec<f32>>();
        Self {
            spec: net.spec().clone(),
            params: to32(net.params()),
            stats: to32(net.stats()),
            adam: AdamState {
                step: adam.step,
                m: to32(&adam.m),
                v: to32(&adam.v),
                lr: adam.lr.as_f32(),
                beta1: adam.beta1.as_f32(),
                beta2: adam.beta2.as_f32(),
                eps: adam.eps.as_f32(),
                weight_decay: adam.weight_decay.as_f32(),
            },
            adam_hyper: [
                adam.lr.as_f64(),
                adam.beta1.as_f64(),
                adam.beta2.as_f64(),
                adam.eps.as_f64(),
                adam.weight_decay.as_f64(),
            ],
        }
    }

    pub fn network<T: Real>(&self) -> Result<Network<T>> {
        let c = |v: &[f32]| v.iter().map(|&x| T::from_f32(x)).collect::<Vec<T>>();
        Network::from_parts(self.spec.clone(), c(&self.params), c(&self.stats))
    }

    pub fn adam_state<T: Real>(&self) -> AdamState<T> {
        let c = |v: &[f32]| v.iter().map(|&x| T::from_f32(x)).collect::<Vec<T>>();
        let [lr, beta1, beta2, eps, weight_decay] = self.adam_hyper.map(T::from_f64);
        AdamState {
            step: self.adam.step,
            m: c(&self.adam.m),
            v: c(&self.adam.v),
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 4 * (3 * self.params.len() + self.stats.len()));
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.spec.architecture.code().to_le_bytes());
        for d in self.spec.input {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.spec.classes as u32).to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        let floats = |out: &mut Vec<u8>, v: &[f32]| {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        };
        floats(&mut out, &self.params);
        floats(&mut out, &self.stats);
        out.extend_from_slice(&self.adam.step.to_le_bytes());
        for h in self.adam_hyper {
            out.extend_from_slice(&h.to_le_bytes());
        }
        floats(&mut out, &self.adam.m);
        floats(&mut out, &self.adam.v);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::format(format!("bad checkpoint magic {magic:?}")));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(format!("unsupported checkpoint version {version}")));
        }
        let code = r.u32()?;
        let arch = Architecture::from_code(code)
            .ok_or_else(|| Error::format(format!("unknown architecture tag {code}")))?;
        let input = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
        let classes = r.u32()? as usize;
        let spec = ModelSpec::new(arch, input, classes).map_err(|e| Error::format(format!("checkpoint model: {e}")))?;
        let count = r.u64()? as usize;
        if count != spec.param_count {
            return Err(Error::format(format!(
                "checkpoint holds {count} parameters, {arch} with these shapes has {}",
                spec.param_count
            )));
        }
        let params = r.f32s(count)?;
        let stats = r.f32s(spec.stat_count)?;
        let step = r.u64()?;
        let mut adam_hyper = [0.0; 5];
        for h in adam_hyper.iter_mut() {
            *h = r.f64()?;
        }
        let m = r.f32s(count)?;
        let v = r.f32s(count)?;
        if r.pos != bytes.len() {
            return Err(Error::format(format!("{} trailing bytes in checkpoint", bytes.len() - r.pos)));
        }
        let [lr, beta1, beta2, eps, weight_decay] = adam_hyper.map(|h| h as f32);
        Ok(Self {
            spec,
            params,
            stats,
            adam: AdamState { step, m, v, lr, beta1, beta2, eps, weight_decay },
            adam_hyper,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::format(format!("checkpoint truncated at byte {} (needed {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::format("checkpoint size overflow"))?)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&ckpt.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
