//! Flat `key=value` run configuration with dotted sections.
//!
//! Resolution order: built-in dataset defaults, preset, config file, then
//! individual overrides. Numbers accept `a/b` fractions and `inf`; ranges
//! are written `lo,hi`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::object::{AugmentParams, BackgroundKey};
use crate::refine::PgdConfig;
use crate::tensor::{Architecture, ModelSpec};
use crate::trainer::{AblationMode, Precision, TrainConfig};

const MNIST_PRESET: &str = include_str!("../../../presets/mnist.cfg");
const GTSRB_PRESET: &str = include_str!("../../../presets/gtsrb.cfg");
const SHAPES_PRESET: &str = include_str!("../../../presets/shapes.cfg");

/// Environment variable naming the directory that holds `mnist/` and `gtsrb/`.
pub const DATA_ENV: &str = "CTXFORGE_DATA";

/// Names accepted by [`ResolvedConfig::preset`].
pub fn preset_names() -> Vec<String> {
    let mut names = Vec::new();
    for base in ["mnist", "gtsrb"] {
        names.push(base.to_string());
        names.extend(AblationMode::ALL.iter().map(|m| format!("{base}-{m}")));
    }
    names.push("shapes".into());
    names
}

/// Which real test set a run reports on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestData {
    None,
    Mnist,
    Gtsrb,
}

/// Whether refinement runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Switch {
    /// Follow the training mode.
    Auto,
    On,
    Off,
}

/// Every setting of a run, fully resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub arch: Architecture,
    pub classes: usize,
    pub side: usize,
    pub channels: usize,
    pub train: TrainConfig,
    pub pgd: PgdConfig,
    pub pgd_enabled: Switch,
    /// Derive `pgd.init_noise` from the step and radius.
    pub init_noise_auto: bool,
    pub aug: AugmentParams,
    pub exemplars: PathBuf,
    /// Directory of context images; `None` draws uniform noise.
    pub contexts: Option<PathBuf>,
    pub background_key: Option<BackgroundKey>,
    pub test_data: TestData,
    pub mnist_dir: Option<PathBuf>,
    pub gtsrb_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub test_mode: bool,
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let v = v.trim();
    let bad = || Error::config(format!("{key}: cannot read {v:?} as a number"));
    let out = match v {
        "inf" | "+inf" | "infinity" => f64::INFINITY,
        _ => match v.split_once('/') {
            Some((a, b)) => {
                let (a, b) = (a.trim().parse::<f64>().map_err(|_| bad())?, b.trim().parse::<f64>().map_err(|_| bad())?);
                if b == 0.0 {
                    return Err(bad());
                }
                a / b
            }
            None => v.parse::<f64>().map_err(|_| bad())?,
        },
    };
    if out.is_nan() {
        return Err(bad());
    }
    Ok(out)
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim().parse().map_err(|_| Error::config(format!("{key}: expected a non-negative integer, got {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

fn parse_range(key: &str, v: &str) -> Result<(f64, f64)> {
    let (a, b) = v.split_once(',').ok_or_else(|| Error::config(format!("{key}: expected `lo,hi`, got {v:?}")))?;
    let r = (parse_f64(key, a)?, parse_f64(key, b)?);
    if r.0 > r.1 {
        return Err(Error::config(format!("{key}: range {v:?} is not ordered")));
    }
    Ok(r)
}

fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:?}")
    }
}

fn fmt_range((a, b): (f64, f64)) -> String {
    format!("{},{}", fmt_f64(a), fmt_f64(b))
}

fn opt_path(v: &str) -> Option<PathBuf> {
    let v = v.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

/// Parses `key=value` lines; `#` starts a comment line.
pub fn parse_pairs(text: &str, origin: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("{origin} line {}: expected key=value, got {line:?}", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl ResolvedConfig {
    /// Built-in starting point for digits.
    fn base_mnist() -> Self {
        Self {
            arch: Architecture::Mnist2Conv,
            classes: 10,
            side: 28,
            channels: 1,
            train: TrainConfig::mnist(AblationMode::Full),
            pgd: PgdConfig::mnist(),
            pgd_enabled: Switch::Auto,
            init_noise_auto: true,
            aug: AugmentParams::mnist(),
            exemplars: PathBuf::from("assets/font"),
            contexts: None,
            background_key: None,
            test_data: TestData::Mnist,
            mnist_dir: None,
            gtsrb_dir: None,
            out_dir: PathBuf::from("runs/mnist-full"),
            test_mode: false,
        }
    }

    /// Resolves a named preset such as `mnist-full` or `gtsrb-baseline`.
    pub fn preset(name: &str) -> Result<Self> {
        let (base, mode) = match name.split_once('-') {
            Some((b, m)) => (b, Some(m.parse::<AblationMode>()?)),
            None => (name, None),
        };
        let text = match base {
            "mnist" => MNIST_PRESET,
            "gtsrb" => GTSRB_PRESET,
            "shapes" if mode.is_none() => SHAPES_PRESET,
            _ => {
                return Err(Error::config(format!(
                    "unknown preset {name:?}; available: {}",
                    preset_names().join(", ")
                )))
            }
        };
        let mut cfg = Self::base_mnist();
        cfg.apply_text(text, &format!("preset {base}"))?;
        if let Some(m) = mode {
            cfg.set("train.mode", m.name())?;
            cfg.set("run.out_dir", &format!("runs/{name}"))?;
        }
        Ok(cfg)
    }

    /// Preset (or digits defaults), then a config file, then overrides.
    pub fn resolve(preset: Option<&str>, file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = match preset {
            Some(p) => Self::preset(p)?,
            None => Self::base_mnist(),
        };
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            cfg.apply_text(&text, &path.display().to_string())?;
        }
        cfg.apply(overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        self.apply(&parse_pairs(text, origin)?)
    }

    /// Applies every pair; unknown keys are collected and reported together.
    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        let mut unknown = Vec::new();
        for (k, v) in pairs {
            match self.set(k, v) {
                Err(Error::Config(m)) if m.starts_with("unknown key") => unknown.push(k.clone()),
                other => other?,
            }
        }
        if !unknown.is_empty() {
            return Err(Error::config(format!("unknown key(s): {}", unknown.join(", "))));
        }
        if self.init_noise_auto {
            self.pgd.init_noise = PgdConfig::default_init_noise(self.pgd.alpha, self.pgd.eps_fg);
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let t = &mut self.train;
        let a = &mut self.aug;
        let p = &mut self.pgd;
        match key {
            "model.arch" => self.arch = v.parse()?,
            "model.classes" => self.classes = parse_usize(key, v)?,
            "model.side" => self.side = parse_usize(key, v)?,
            "model.channels" => self.channels = parse_usize(key, v)?,
            "train.epochs" => t.epochs = parse_usize(key, v)?,
            "train.rounds_per_epoch" => t.rounds_per_epoch = parse_usize(key, v)?,
            "train.passes" => t.passes = parse_usize(key, v)?,
            "train.lr" => t.lr = parse_f64(key, v)?,
            "train.weight_decay" => t.weight_decay = parse_f64(key, v)?,
            "train.mode" => t.mode = v.parse()?,
            "train.eval_every" => t.eval_every = parse_usize(key, v)?,
            "train.val_size" => t.val_size = parse_usize(key, v)?,
            "train.precision" => t.precision = v.parse()?,
            "sampler.p" => t.p = parse_f64(key, v)?,
            "sampler.reuse_passes" => t.reuse_passes = parse_usize(key, v)?,
            "sampler.chain_refined" => t.chain_refined = parse_bool(key, v)?,
            "sampler.contexts" => self.contexts = if v.trim() == "noise" { None } else { opt_path(v) },
            "pgd.enabled" => {
                self.pgd_enabled = match v {
                    "auto" => Switch::Auto,
                    "on" | "true" => Switch::On,
                    "off" | "false" => Switch::Off,
                    _ => return Err(Error::config(format!("pgd.enabled must be auto, on or off, got {v:?}"))),
                }
            }
            "pgd.alpha" => p.alpha = parse_f64(key, v)?,
            "pgd.iterations" => p.iterations = parse_usize(key, v)?,
            "pgd.eps_fg" => p.eps_fg = parse_f64(key, v)?,
            "pgd.eps_bg" => p.eps_bg = parse_f64(key, v)?,
            "pgd.init_noise" => {
                self.init_noise_auto = v == "auto";
                if !self.init_noise_auto {
                    p.init_noise = parse_f64(key, v)?;
                }
            }
            "aug.rotation" => a.rotation = parse_range(key, v)?,
            "aug.translate" => a.translate = parse_range(key, v)?,
            "aug.scale" => a.scale = parse_range(key, v)?,
            "aug.shear" => a.shear = parse_range(key, v)?,
            "aug.perspective" => a.perspective = parse_f64(key, v)?,
            "aug.blur" => {
                a.blur_kernels = v.split(',').map(|k| parse_usize(key, k)).collect::<Result<Vec<_>>>()?;
            }
            "aug.brightness" => a.jitter.brightness = parse_range(key, v)?,
            "aug.contrast" => a.jitter.contrast = parse_range(key, v)?,
            "aug.saturation" => a.jitter.saturation = parse_range(key, v)?,
            "aug.hue" => a.jitter.hue = parse_range(key, v)?,
            "aug.exposure" => a.exposure = parse_range(key, v)?,
            "data.exemplars" => self.exemplars = PathBuf::from(v),
            "data.background_key" => self.background_key = if v == "none" { None } else { Some(v.parse()?) },
            "data.test" => {
                self.test_data = match v {
                    "none" => TestData::None,
                    "mnist" => TestData::Mnist,
                    "gtsrb" => TestData::Gtsrb,
                    _ => return Err(Error::config(format!("data.test must be none, mnist or gtsrb, got {v:?}"))),
                }
            }
            "data.mnist_dir" => self.mnist_dir = opt_path(v),
            "data.gtsrb_dir" => self.gtsrb_dir = opt_path(v),
            "run.seed" => t.seed = v.trim().parse().map_err(|_| Error::config(format!("run.seed: bad integer {v:?}")))?,
            "run.out_dir" => self.out_dir = PathBuf::from(v),
            "run.test_mode" => self.test_mode = parse_bool(key, v)?,
            _ => return Err(Error::config(format!("unknown key {key}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.aug.validate()?;
        self.pgd.validate()?;
        self.model_spec()?;
        let refine = self.train.mode.flags().refine;
        match (self.pgd_enabled, refine) {
            (Switch::On, false) => {
                return Err(Error::config(format!(
                    "pgd.enabled=on conflicts with mode {}, which does not refine; use refinement-only or full",
                    self.train.mode
                )))
            }
            (Switch::Off, true) => {
                return Err(Error::config(format!(
                    "pgd.enabled=off conflicts with mode {}, which refines; use random-context or image-as-context",
                    self.train.mode
                )))
            }
            _ => {}
        }
        if self.test_mode && self.train.precision != Precision::F64 {
            return Err(Error::config("run.test_mode requires train.precision=f64"));
        }
        Ok(())
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        ModelSpec::new(self.arch, [self.channels, self.side, self.side], self.classes)
    }

    /// Directory holding the MNIST test files, from config or the environment.
    pub fn mnist_root(&self) -> Option<PathBuf> {
        self.mnist_dir.clone().or_else(|| std::env::var_os(DATA_ENV).map(|d| PathBuf::from(d).join("mnist")))
    }

    pub fn gtsrb_root(&self) -> Option<PathBuf> {
        self.gtsrb_dir.clone().or_else(|| std::env::var_os(DATA_ENV).map(|d| PathBuf::from(d).join("gtsrb")))
    }

    /// Every key with its value, sorted; parsing this text reproduces the
    /// configuration.
    pub fn to_pairs(&self) -> BTreeMap<&'static str, String> {
        let t = &self.train;
        let a = &self.aug;
        let p = &self.pgd;
        let path = |o: &Option<PathBuf>| o.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut m = BTreeMap::new();
        m.insert("model.arch", self.arch.tag().to_string());
        m.insert("model.classes", self.classes.to_string());
        m.insert("model.side", self.side.to_string());
        m.insert("model.channels", self.channels.to_string());
        m.insert("train.epochs", t.epochs.to_string());
        m.insert("train.rounds_per_epoch", t.rounds_per_epoch.to_string());
        m.insert("train.passes", t.passes.to_string());
        m.insert("train.lr", fmt_f64(t.lr));
        m.insert("train.weight_decay", fmt_f64(t.weight_decay));
        m.insert("train.mode", t.mode.name().to_string());
        m.insert("train.eval_every", t.eval_every.to_string());
        m.insert("train.val_size", t.val_size.to_string());
        m.insert("train.precision", t.precision.to_string());
        m.insert("sampler.p", fmt_f64(t.p));
        m.insert("sampler.reuse_passes", t.reuse_passes.to_string());
        m.insert("sampler.chain_refined", t.chain_refined.to_string());
        m.insert("sampler.contexts", self.contexts.as_ref().map_or("noise".into(), |p| p.display().to_string()));
        m.insert(
            "pgd.enabled",
            match self.pgd_enabled {
                Switch::Auto => "auto",
                Switch::On => "on",
                Switch::Off => "off",
            }
            .to_string(),
        );
        m.insert("pgd.alpha", fmt_f64(p.alpha));
        m.insert("pgd.iterations", p.iterations.to_string());
        m.insert("pgd.eps_fg", fmt_f64(p.eps_fg));
        m.insert("pgd.eps_bg", fmt_f64(p.eps_bg));
        m.insert("pgd.init_noise", if self.init_noise_auto { "auto".into() } else { fmt_f64(p.init_noise) });
        m.insert("aug.rotation", fmt_range(a.rotation));
        m.insert("aug.translate", fmt_range(a.translate));
        m.insert("aug.scale", fmt_range(a.scale));
        m.insert("aug.shear", fmt_range(a.shear));
        m.insert("aug.perspective", fmt_f64(a.perspective));
        m.insert("aug.blur", a.blur_kernels.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(","));
        m.insert("aug.brightness", fmt_range(a.jitter.brightness));
        m.insert("aug.contrast", fmt_range(a.jitter.contrast));
        m.insert("aug.saturation", fmt_range(a.jitter.saturation));
        m.insert("aug.hue", fmt_range(a.jitter.hue));
        m.insert("aug.exposure", fmt_range(a.exposure));
        m.insert("data.exemplars", self.exemplars.display().to_string());
        m.insert(
            "data.background_key",
            match self.background_key {
                None => "none",
                Some(BackgroundKey::White) => "white",
                Some(BackgroundKey::Black) => "black",
            }
            .to_string(),
        );
        m.insert(
            "data.test",
            match self.test_data {
                TestData::None => "none",
                TestData::Mnist => "mnist",
                TestData::Gtsrb => "gtsrb",
            }
            .to_string(),
        );
        m.insert("data.mnist_dir", path(&self.mnist_dir));
        m.insert("data.gtsrb_dir", path(&self.gtsrb_dir));
        m.insert("run.seed", t.seed.to_string());
        m.insert("run.out_dir", self.out_dir.display().to_string());
        m.insert("run.test_mode", self.test_mode.to_string());
        m
    }

    /// Manifest text: a version comment followed by every key.
    pub fn manifest(&self) -> String {
        let mut s = format!("# ctxforge {}\n", env!("CARGO_PKG_VERSION"));
        for (k, v) in self.to_pairs() {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_ranges_and_fractions() {
        assert_eq!(parse_f64("k", "2/255").unwrap(), 2.0 / 255.0);
        assert_eq!(parse_f64("k", "inf").unwrap(), f64::INFINITY);
        assert!(parse_f64("k", "1/0").is_err());
        assert!(parse_f64("k", "abc").is_err());
        assert_eq!(parse_range("k", "-15,15").unwrap(), (-15.0, 15.0));
        assert!(parse_range("k", "2,1").is_err());
    }

    #[test]
    fn gtsrb_full_preset_encodes_refinement_settings() {
        let cfg = ResolvedConfig::preset("gtsrb-full").unwrap();
        assert_eq!(cfg.pgd.alpha, 2.0 / 255.0);
        assert_eq!(cfg.pgd.eps_fg, 4.0 / 255.0);
        assert_eq!(cfg.pgd.eps_bg, 0.0);
        assert_eq!(cfg.train.mode, AblationMode::Full);
        assert_eq!(cfg.classes, 43);
        let m = ResolvedConfig::preset("mnist-baseline").unwrap();
        assert_eq!(m.train.mode, AblationMode::Baseline);
        assert_eq!(m.pgd.eps_fg, f64::INFINITY);
        assert_eq!(m.pgd.alpha, 1.6 / 255.0);
        assert_eq!((m.train.epochs, m.train.rounds_per_epoch, m.train.passes), (300, 20, 5));
        for name in preset_names() {
            ResolvedConfig::preset(&name).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn manifest_reproduces_config() {
        let over = [("train.epochs".to_string(), "3".to_string()), ("sampler.p".into(), "1/4".into())];
        let cfg = ResolvedConfig::resolve(Some("gtsrb-refinement-only"), None, &over).unwrap();
        let mut back = ResolvedConfig::base_mnist();
        back.apply_text(&cfg.manifest(), "manifest").unwrap();
        assert_eq!(back, cfg);
        assert_eq!(ResolvedConfig::resolve(Some("gtsrb-refinement-only"), None, &over).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_and_conflicts() {
        let over = [("train.epoch".to_string(), "3".to_string()), ("pgd.step".into(), "1".into())];
        let err = ResolvedConfig::resolve(Some("mnist-full"), None, &over).unwrap_err();
        assert!(err.to_string().contains("train.epoch, pgd.step"), "{err}");
        let over = [("pgd.enabled".to_string(), "on".to_string())];
        let err = ResolvedConfig::resolve(Some("mnist-baseline"), None, &over).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(ResolvedConfig::resolve(Some("mnist-full"), None, &over).is_ok());
        let over = [("pgd.enabled".to_string(), "off".to_string())];
        assert!(ResolvedConfig::resolve(Some("mnist-full"), None, &over).is_err());
        assert!(ResolvedConfig::preset("mnist-fancy").is_err());
    }
}
