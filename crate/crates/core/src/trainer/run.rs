use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::round::{fit, generate_round, Counters, RoundInputs};
use super::{evaluate, TrainConfig};
use crate::data::{build_synthetic_testset, TestSet};
use crate::error::{Error, Result};
use crate::imageops::Image;
use crate::object::{AugmentParams, ObjectExemplar};
use crate::refine::PgdConfig;
use crate::rng::{Purpose, SeedStream};
use crate::tensor::{read_checkpoint, write_checkpoint, AdamState, Checkpoint, ModelSpec, Network, Real};

pub const METRICS_HEADER: &str = "epoch,round,mode,synth_val_acc,test_acc,mean_loss,seconds";

/// Inputs of a training run.
#[derive(Debug, Clone, Copy)]
pub struct RunSetup<'a> {
    pub model: &'a ModelSpec,
    pub exemplars: &'a [ObjectExemplar],
    pub aug: &'a AugmentParams,
    pub pgd: &'a PgdConfig,
    pub train: &'a TrainConfig,
    /// Real test data, reported but never used for selection.
    pub test_set: Option<&'a TestSet>,
    /// Context images for training rounds; empty means uniform noise.
    pub contexts: &'a [Image],
}

/// Where and how a run writes its artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub resume: bool,
    /// Written verbatim to `manifest.txt`.
    pub manifest: Option<String>,
    /// Write 0 in the seconds column so runs compare byte for byte.
    pub zero_seconds: bool,
}

/// One evaluation row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub epoch: usize,
    pub round: u64,
    pub mode: String,
    pub synth_val_acc: f64,
    pub test_acc: Option<f64>,
    /// Mean fit loss over the rounds since the previous row.
    pub mean_loss: f64,
    pub seconds: f64,
}

impl MetricRow {
    fn to_csv(&self) -> String {
        let test = self.test_acc.map(|a| format!("{a:.6}")).unwrap_or_default();
        format!(
            "{},{},{},{:.6},{},{:.6},{:.1}",
            self.epoch, self.round, self.mode, self.synth_val_acc, test, self.mean_loss, self.seconds
        )
    }

    fn from_csv(line: &str, line_no: usize) -> Result<Self> {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::format(format!("metrics line {line_no}: {line:?}"));
        if f.len() != 7 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        Ok(Self {
            epoch: f[0].parse().map_err(|_| bad())?,
            round: f[1].parse().map_err(|_| bad())?,
            mode: f[2].to_string(),
            synth_val_acc: num(f[3])?,
            test_acc: if f[4].is_empty() { None } else { Some(num(f[4])?) },
            mean_loss: num(f[5])?,
            seconds: num(f[6])?,
        })
    }
}

/// Reads a `metrics.csv` written by [`run_training`].
pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::format(format!("{} does not start with the metrics header", path.display())));
    }
    lines.enumerate().filter(|(_, l)| !l.is_empty()).map(|(i, l)| MetricRow::from_csv(l, i + 2)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestCheckpoint {
    pub epoch: usize,
    pub round: u64,
    pub synth_val_acc: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome<T> {
    pub network: Network<T>,
    pub adam: AdamState<T>,
    pub metrics: Vec<MetricRow>,
    pub best: Option<BestCheckpoint>,
    pub counters: Counters,
}

struct Lock(PathBuf);

impl Lock {
    fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join("run.lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Lock(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::config(format!(
                "{} is locked by another run; remove {} if that run is gone",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

fn best_of(rows: &[MetricRow]) -> Option<BestCheckpoint> {
    let mut best: Option<BestCheckpoint> = None;
    for r in rows {
        if best.is_none_or(|b| r.synth_val_acc > b.synth_val_acc) {
            best = Some(BestCheckpoint { epoch: r.epoch, round: r.round, synth_val_acc: r.synth_val_acc });
        }
    }
    best
}

fn write_rows(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut text = String::from(METRICS_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&r.to_csv());
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn append_row(path: &Path, row: &MetricRow) -> Result<()> {
    let mut f = OpenOptions::new().append(true).open(path).map_err(|e| Error::io(path, e))?;
    writeln!(f, "{}", row.to_csv()).map_err(|e| Error::io(path, e))
}

fn check_setup(setup: &RunSetup<'_>) -> Result<()> {
    setup.train.validate()?;
    setup.aug.validate()?;
    if setup.train.mode.flags().refine {
        setup.pgd.validate()?;
    }
    let spec = setup.model;
    if setup.exemplars.len() != spec.classes {
        return Err(Error::config(format!(
            "{} exemplars for a {}-class model",
            setup.exemplars.len(),
            spec.classes
        )));
    }
    for (i, e) in setup.exemplars.iter().enumerate() {
        let c = &e.canonical;
        if e.class_id != i {
            return Err(Error::config(format!("exemplar {i} carries class id {}", e.class_id)));
        }
        if [c.channels(), c.height(), c.width()] != spec.input {
            return Err(Error::config(format!(
                "exemplar {i} is {}x{}x{} but the model expects {:?}",
                c.channels(),
                c.height(),
                c.width(),
                spec.input
            )));
        }
    }
    if let Some(t) = setup.test_set {
        if t.dims() != Some(spec.input) {
            return Err(Error::config(format!("test images are {:?}, model expects {:?}", t.dims(), spec.input)));
        }
    }
    Ok(())
}

/// Runs `epochs * rounds_per_epoch` rounds of generate-then-fit.
///
/// Every `eval_every` epochs (and after the last one) the model is scored
/// on a frozen synthetic validation set and, when given, the test set.
/// `best.ckpt` tracks the highest synthetic accuracy; `last.ckpt` is the
/// state at the latest evaluation and is what `resume` continues from.
pub fn run_training<T: Real>(
    setup: &RunSetup<'_>,
    opts: &RunOptions,
    on_row: &mut dyn FnMut(&MetricRow),
) -> Result<RunOutcome<T>> {
    check_setup(setup)?;
    let cfg = setup.train;
    let dir = &opts.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let _lock = Lock::acquire(dir)?;
    let (last_path, best_path, metrics_path) = (dir.join("last.ckpt"), dir.join("best.ckpt"), dir.join("metrics.csv"));
    let stream = SeedStream::new(cfg.seed);

    let mut net = Network::<T>::init(setup.model.clone(), &mut stream.rng(Purpose::Init, 0, 0, 0));
    let mut adam = AdamState::<T>::new(net.params().len(), cfg.lr, cfg.weight_decay);
    let mut rows = Vec::new();
    if opts.resume && last_path.exists() {
        let ckpt = read_checkpoint(&last_path)?;
        if &ckpt.spec != setup.model {
            return Err(Error::config(format!("{} was written for a different model", last_path.display())));
        }
        net = ckpt.network::<T>()?;
        adam = ckpt.adam_state::<T>();
        rows = if metrics_path.exists() { read_metrics(&metrics_path)? } else { Vec::new() };
        rows.retain(|r| r.round <= adam.step);
    } else if last_path.exists() {
        return Err(Error::config(format!(
            "{} already holds a run; pass --resume or pick a fresh directory",
            dir.display()
        )));
    }
    write_rows(&metrics_path, &rows)?;
    if let Some(m) = &opts.manifest {
        let p = dir.join("manifest.txt");
        std::fs::write(&p, m).map_err(|e| Error::io(&p, e))?;
    }
    let mut best = best_of(&rows);
    let mut counters = Counters::default();
    let total = cfg.total_rounds();
    if adam.step >= total {
        return Ok(RunOutcome { network: net, adam, metrics: rows, best, counters });
    }

    let val_seed = stream.key(Purpose::Validation, u64::MAX, 0, 0);
    let val = build_synthetic_testset(setup.exemplars, setup.aug, cfg.val_size.max(setup.exemplars.len()), val_seed)?;
    let inputs = RoundInputs { exemplars: setup.exemplars, aug: setup.aug, pgd: setup.pgd, cfg, stream, contexts: setup.contexts };
    let started = Instant::now();
    let base_seconds = rows.last().map_or(0.0, |r| r.seconds);
    let (mut loss_sum, mut loss_rounds) = (0.0f64, 0usize);
    for round in adam.step..total {
        let batch = generate_round(&net, &inputs, round, &mut counters)?;
        let loss = fit(&mut net, &mut adam, &batch.images, &batch.labels)?;
        counters.fit_steps += 1;
        loss_sum += loss.as_f64();
        loss_rounds += 1;
        let done = round + 1;
        if done % cfg.rounds_per_epoch as u64 != 0 {
            continue;
        }
        let epoch = (done / cfg.rounds_per_epoch as u64) as usize;
        if !epoch.is_multiple_of(cfg.eval_every) && epoch != cfg.epochs {
            continue;
        }
        let synth = evaluate(&net, &val)?;
        let test = setup.test_set.map(|t| evaluate(&net, t)).transpose()?;
        let row = MetricRow {
            epoch,
            round: done,
            mode: cfg.mode.name().to_string(),
            synth_val_acc: synth.accuracy,
            test_acc: test.map(|t| t.accuracy),
            mean_loss: loss_sum / loss_rounds as f64,
            seconds: if opts.zero_seconds { 0.0 } else { base_seconds + started.elapsed().as_secs_f64() },
        };
        (loss_sum, loss_rounds) = (0.0, 0);
        let ckpt = Checkpoint::capture(&net, &adam);
        if best.is_none_or(|b| row.synth_val_acc > b.synth_val_acc) {
            write_checkpoint(&best_path, &ckpt)?;
            best = Some(BestCheckpoint { epoch, round: done, synth_val_acc: row.synth_val_acc });
        }
        write_checkpoint(&last_path, &ckpt)?;
        append_row(&metrics_path, &row)?;
        on_row(&row);
        rows.push(row);
    }
    Ok(RunOutcome { network: net, adam, metrics: rows, best, counters })
}
