//! The training loop: per-round sample generation, the fit step,
//! evaluation and checkpoint selection.

mod eval;
mod round;
mod run;

pub use eval::{evaluate, evaluate_with, BnStats, Evaluation};
pub use round::{fit, generate_round, Counters, RoundBatch, RoundInputs};
pub use run::{read_metrics, run_training, BestCheckpoint, MetricRow, RunOptions, RunOutcome, RunSetup};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// The five training variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AblationMode {
    /// A fresh noise context for every sample.
    Baseline,
    /// Each noise context hosts objects for two consecutive passes.
    RandomContext,
    /// Random contexts plus refinement.
    RefinementOnly,
    /// Composites are kept as the next pass's contexts with probability p.
    ImageAsContext,
    /// Chaining plus refinement.
    Full,
}

/// What a mode switches on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeFlags {
    pub reuse: bool,
    pub chaining: bool,
    pub refine: bool,
}

impl AblationMode {
    /// In reporting order.
    pub const ALL: [AblationMode; 5] = [
        AblationMode::Baseline,
        AblationMode::RandomContext,
        AblationMode::RefinementOnly,
        AblationMode::ImageAsContext,
        AblationMode::Full,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AblationMode::Baseline => "baseline",
            AblationMode::RandomContext => "random-context",
            AblationMode::RefinementOnly => "refinement-only",
            AblationMode::ImageAsContext => "image-as-context",
            AblationMode::Full => "full",
        }
    }

    pub fn flags(&self) -> ModeFlags {
        let (reuse, chaining, refine) = match self {
            AblationMode::Baseline => (false, false, false),
            AblationMode::RandomContext => (true, false, false),
            AblationMode::RefinementOnly => (true, false, true),
            AblationMode::ImageAsContext => (false, true, false),
            AblationMode::Full => (false, true, true),
        };
        ModeFlags { reuse, chaining, refine }
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            Error::config(format!(
                "unknown mode {s:?}; expected one of {}",
                Self::ALL.map(|m| m.name()).join(", ")
            ))
        })
    }
}

/// Arithmetic used for the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(Error::config(format!("precision must be f32 or f64, got {other:?}"))),
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

/// Schedule and optimizer settings of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub rounds_per_epoch: usize,
    /// Passes per round; every pass renders each class once.
    pub passes: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub mode: AblationMode,
    /// Probability of keeping a composite as the next context (chaining modes).
    pub p: f64,
    /// Passes a context survives in random-context modes.
    pub reuse_passes: usize,
    /// Chain the refined image instead of the raw composite.
    pub chain_refined: bool,
    pub eval_every: usize,
    pub val_size: usize,
    pub seed: u64,
    pub precision: Precision,
}

impl TrainConfig {
    pub fn mnist(mode: AblationMode) -> Self {
        Self {
            epochs: 300,
            rounds_per_epoch: 20,
            passes: 5,
            lr: 1e-4,
            weight_decay: 1e-4,
            mode,
            p: 0.5,
            reuse_passes: 2,
            chain_refined: false,
            eval_every: 5,
            val_size: 2000,
            seed: 0,
            precision: Precision::F32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("train.rounds_per_epoch", self.rounds_per_epoch),
            ("train.passes", self.passes),
            ("train.eval_every", self.eval_every),
            ("sampler.reuse_passes", self.reuse_passes),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("train.lr and train.weight_decay must be finite and >= 0"));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::config(format!("sampler.p must lie in [0, 1], got {}", self.p)));
        }
        Ok(())
    }

    /// Probability actually used for chaining (0 outside chaining modes).
    pub fn effective_p(&self) -> f64 {
        if self.mode.flags().chaining {
            self.p
        } else {
            0.0
        }
    }

    pub fn total_rounds(&self) -> u64 {
        (self.epochs * self.rounds_per_epoch) as u64
    }
}
