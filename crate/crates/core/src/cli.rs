//! Command-line front end: `train`, `eval`, `synth` and `ablate`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{ResolvedConfig, TestData};
use crate::data::{build_synthetic_testset, load_gtsrb_test, load_mnist_idx, TestSet};
use crate::error::{Error, Result};
use crate::context::load_context_dir;
use crate::imageops::{save_png, Image};
use crate::object::{load_exemplars, ExemplarOptions, ObjectExemplar};
use crate::rng::{Purpose, SeedStream};
use crate::tensor::{read_checkpoint, Architecture, Network, Real};
use crate::trainer::{
    evaluate, evaluate_with, generate_round, read_metrics, run_training, AblationMode, BnStats, Counters, MetricRow, Precision, RoundInputs,
    RunOptions, RunSetup,
};

const OVERRIDE_HELP: &str = "Any configuration key can be overridden as `--key value` (for example \
`--pgd.alpha 2/255`). Shortcuts: --epochs, --seed, --out, --mode, --precision.";

#[derive(Debug, Parser)]
#[command(name = "ctxforge", version, about = "Train image classifiers from one synthetic exemplar per class", after_help = OVERRIDE_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct ConfigArgs {
    /// Named preset, e.g. mnist-full or gtsrb-baseline.
    #[arg(long)]
    preset: Option<String>,
    /// key=value file applied after the preset.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DatasetArg {
    Auto,
    Mnist,
    Gtsrb,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BnArg {
    Running,
    Batch,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model and write checkpoints, metrics and a manifest.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Continue from last.ckpt in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Report accuracy and mean loss of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Evaluation data; auto picks the real set matching the architecture.
        #[arg(long, value_enum, default_value = "auto")]
        dataset: DatasetArg,
        /// Directory with the test files (overrides data.* and CTXFORGE_DATA).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Batch-norm statistics; `batch` normalizes with the statistics of
        /// the evaluated images themselves (transductive, for diagnosis).
        #[arg(long, value_enum, default_value = "running")]
        bn_stats: BnArg,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Write training composites as PNG files plus labels.tsv.
    Synth {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 50)]
        count: usize,
        /// Model used for refinement; defaults to the seeded initial model.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train all five modes in turn and print a comparison table.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

const SHORTCUTS: [(&str, &str); 5] = [
    ("epochs", "train.epochs"),
    ("seed", "run.seed"),
    ("out", "run.out_dir"),
    ("mode", "train.mode"),
    ("precision", "train.precision"),
];

/// Splits `--key value` configuration overrides from the arguments clap
/// understands.
fn split_overrides(args: Vec<OsString>) -> Result<(Vec<OsString>, Vec<(String, String)>)> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.into_iter().peekable();
    while let Some(arg) = it.next() {
        let Some(s) = arg.to_str().and_then(|s| s.strip_prefix("--")) else {
            rest.push(arg);
            continue;
        };
        let (name, inline) = match s.split_once('=') {
            Some((n, v)) => (n.to_string(), Some(v.to_string())),
            None => (s.to_string(), None),
        };
        let key = SHORTCUTS.iter().find(|(short, _)| *short == name).map(|(_, k)| k.to_string());
        let key = match key {
            Some(k) => k,
            None if name.contains('.') => name,
            None => {
                rest.push(arg);
                continue;
            }
        };
        let value = match inline {
            Some(v) => v,
            None => it
                .next()
                .and_then(|v| v.into_string().ok())
                .ok_or_else(|| Error::config(format!("--{key} needs a value")))?,
        };
        overrides.push((key, value));
    }
    Ok((rest, overrides))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, S>(args: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: Into<OsString>,
{
    let (rest, overrides) = split_overrides(args.into_iter().map(Into::into).collect())?;
    let cli = match Cli::try_parse_from(rest) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(Error::config(e.to_string())),
    };
    match cli.command {
        Command::Train { cfg, resume } => cmd_train(&resolve(&cfg, &overrides)?, resume).map(|_| ()),
        Command::Eval { checkpoint, dataset, data, bn_stats, cfg } => {
            let bn = match bn_stats {
                BnArg::Running => BnStats::Running,
                BnArg::Batch => BnStats::Batch,
            };
            cmd_eval(&checkpoint, dataset, data.as_deref(), bn, &cfg, &overrides)
        }
        Command::Synth { cfg, count, checkpoint } => cmd_synth(&resolve(&cfg, &overrides)?, count, checkpoint.as_deref()),
        Command::Ablate { cfg } => cmd_ablate(&cfg, &overrides),
    }
}

fn resolve(args: &ConfigArgs, overrides: &[(String, String)]) -> Result<ResolvedConfig> {
    ResolvedConfig::resolve(args.preset.as_deref(), args.config.as_deref(), overrides)
}

fn load_set_exemplars(cfg: &ResolvedConfig) -> Result<Vec<ObjectExemplar>> {
    let opts = ExemplarOptions { side: Some(cfg.side), channels: cfg.channels, background_key: cfg.background_key };
    load_exemplars(&cfg.exemplars, cfg.classes, &opts)
}

fn load_contexts(cfg: &ResolvedConfig) -> Result<Vec<Image>> {
    match &cfg.contexts {
        Some(dir) => load_context_dir(dir, cfg.side, cfg.channels),
        None => Ok(Vec::new()),
    }
}

fn mnist_files(root: &Path) -> (PathBuf, PathBuf) {
    (root.join("t10k-images-idx3-ubyte"), root.join("t10k-labels-idx1-ubyte"))
}

fn load_real(which: TestData, root: Option<PathBuf>, side: usize) -> Result<Option<TestSet>> {
    let need = |name: &str, key: &str| {
        Error::dataset(format!(
            "{name} test data location unknown: set {key}, or CTXFORGE_DATA to a directory holding {}/, or data.test=none",
            name.to_lowercase()
        ))
    };
    match which {
        TestData::None => Ok(None),
        TestData::Mnist => {
            let root = root.ok_or_else(|| need("MNIST", "data.mnist_dir"))?;
            let (images, labels) = mnist_files(&root);
            load_mnist_idx(&images, &labels).map(Some)
        }
        TestData::Gtsrb => {
            let root = root.ok_or_else(|| need("GTSRB", "data.gtsrb_dir"))?;
            load_gtsrb_test(&root, side).map(Some)
        }
    }
}

fn load_test_set(cfg: &ResolvedConfig) -> Result<Option<TestSet>> {
    let root = match cfg.test_data {
        TestData::Mnist => cfg.mnist_root(),
        TestData::Gtsrb => cfg.gtsrb_root(),
        TestData::None => None,
    };
    load_real(cfg.test_data, root, cfg.side)
}

fn describe(row: &MetricRow) -> String {
    let test = row.test_acc.map(|a| format!(" test {a:.4}")).unwrap_or_default();
    format!(
        "epoch {:>4} round {:>6}  synth_val {:.4}{test}  loss {:.4}  {:.0}s",
        row.epoch, row.round, row.synth_val_acc, row.mean_loss, row.seconds
    )
}

fn train_with<T: Real>(
    cfg: &ResolvedConfig,
    resume: bool,
    exemplars: &[ObjectExemplar],
    contexts: &[Image],
    test: Option<&TestSet>,
) -> Result<Vec<MetricRow>> {
    let spec = cfg.model_spec()?;
    let setup = RunSetup { model: &spec, exemplars, aug: &cfg.aug, pgd: &cfg.pgd, train: &cfg.train, test_set: test, contexts };
    let opts = RunOptions {
        out_dir: cfg.out_dir.clone(),
        resume,
        manifest: Some(cfg.manifest()),
        zero_seconds: cfg.test_mode,
    };
    let mode = cfg.train.mode;
    let outcome = run_training::<T>(&setup, &opts, &mut |row| eprintln!("[{mode}] {}", describe(row)))?;
    if let Some(b) = outcome.best {
        let row = outcome.metrics.iter().find(|r| r.round == b.round).expect("best row is recorded");
        println!("best epoch={} synth_val_acc={:.6}", b.epoch, b.synth_val_acc);
        if let Some(a) = row.test_acc {
            println!("accuracy={a:.6}");
        }
    }
    Ok(outcome.metrics)
}

/// Runs training for a resolved configuration and returns its metric rows.
pub fn cmd_train(cfg: &ResolvedConfig, resume: bool) -> Result<Vec<MetricRow>> {
    let exemplars = load_set_exemplars(cfg)?;
    let contexts = load_contexts(cfg)?;
    let test = load_test_set(cfg)?;
    eprintln!(
        "training {} ({} mode, {} epochs) into {}",
        cfg.arch,
        cfg.train.mode,
        cfg.train.epochs,
        cfg.out_dir.display()
    );
    match cfg.train.precision {
        Precision::F32 => train_with::<f32>(cfg, resume, &exemplars, &contexts, test.as_ref()),
        Precision::F64 => train_with::<f64>(cfg, resume, &exemplars, &contexts, test.as_ref()),
    }
}

fn cmd_eval(
    checkpoint: &Path,
    dataset: DatasetArg,
    data: Option<&Path>,
    bn: BnStats,
    cfg_args: &ConfigArgs,
    overrides: &[(String, String)],
) -> Result<()> {
    let ckpt = read_checkpoint(checkpoint)?;
    let net = ckpt.network::<f32>()?;
    let spec = net.spec().clone();
    let which = match dataset {
        DatasetArg::Auto => match spec.architecture {
            Architecture::Mnist2Conv => DatasetArg::Mnist,
            Architecture::Gtsrb5Conv => DatasetArg::Gtsrb,
        },
        d => d,
    };
    let needs_cfg = which == DatasetArg::Synthetic || data.is_none();
    let cfg = if needs_cfg || cfg_args.preset.is_some() || cfg_args.config.is_some() {
        let mut args = ConfigArgs { preset: cfg_args.preset.clone(), config: cfg_args.config.clone() };
        if args.preset.is_none() && args.config.is_none() {
            args.preset = Some(match spec.architecture {
                Architecture::Mnist2Conv => "mnist".into(),
                Architecture::Gtsrb5Conv => "gtsrb".into(),
            });
        }
        Some(resolve(&args, overrides)?)
    } else {
        None
    };
    let set = match which {
        DatasetArg::Synthetic => {
            let cfg = cfg.as_ref().expect("config resolved for synthetic data");
            let ex = load_set_exemplars(cfg)?;
            let seed = SeedStream::new(cfg.train.seed).key(Purpose::Validation, u64::MAX, 0, 0);
            build_synthetic_testset(&ex, &cfg.aug, cfg.train.val_size.max(ex.len()), seed)?
        }
        DatasetArg::Mnist | DatasetArg::Gtsrb => {
            let kind = if which == DatasetArg::Mnist { TestData::Mnist } else { TestData::Gtsrb };
            let root = match (data, &cfg) {
                (Some(d), _) => Some(d.to_path_buf()),
                (None, Some(c)) if kind == TestData::Mnist => c.mnist_root(),
                (None, Some(c)) => c.gtsrb_root(),
                (None, None) => None,
            };
            load_real(kind, root, spec.input[1])?.expect("real data requested")
        }
        DatasetArg::Auto => unreachable!("auto resolved above"),
    };
    if set.dims() != Some(spec.input) || set.classes > spec.classes {
        return Err(Error::config(format!(
            "checkpoint is a {} for {:?} inputs and {} classes; the data has {:?} inputs and {} classes",
            spec.architecture,
            spec.input,
            spec.classes,
            set.dims(),
            set.classes
        )));
    }
    let ev = evaluate_with(&net, &set, bn)?;
    if bn == BnStats::Batch {
        println!("bn_stats=batch");
    }
    println!("accuracy={:.6}", ev.accuracy);
    println!("loss={:.6}", ev.mean_loss);
    println!("count={}", ev.count);
    Ok(())
}

fn synth_with<T: Real>(
    cfg: &ResolvedConfig,
    count: usize,
    checkpoint: Option<&Path>,
    exemplars: &[ObjectExemplar],
    contexts: &[Image],
) -> Result<()> {
    let stream = SeedStream::new(cfg.train.seed);
    let net = match checkpoint {
        Some(p) => read_checkpoint(p)?.network::<T>()?,
        None => Network::<T>::init(cfg.model_spec()?, &mut stream.rng(Purpose::Init, 0, 0, 0)),
    };
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let inputs = RoundInputs { exemplars, aug: &cfg.aug, pgd: &cfg.pgd, cfg: &cfg.train, stream, contexts };
    let per_pass = exemplars.len();
    let mut manifest = String::from("file\tlabel\tround\tpass\n");
    let mut written = 0usize;
    let mut counters = Counters::default();
    let mut round = 0u64;
    while written < count {
        let batch = generate_round(&net, &inputs, round, &mut counters)?;
        for (i, (img, label)) in batch.images.iter().zip(&batch.labels).enumerate() {
            if written == count {
                break;
            }
            let name = format!("{written:05}.png");
            save_png(img, &out.join(&name))?;
            let _ = writeln!(manifest, "{name}\t{label}\t{round}\t{}", i / per_pass);
            written += 1;
        }
        round += 1;
    }
    let p = out.join("labels.tsv");
    std::fs::write(&p, manifest).map_err(|e| Error::io(&p, e))?;
    println!("wrote {written} composites to {}", out.display());
    Ok(())
}

fn cmd_synth(cfg: &ResolvedConfig, count: usize, checkpoint: Option<&Path>) -> Result<()> {
    let exemplars = load_set_exemplars(cfg)?;
    let contexts = load_contexts(cfg)?;
    match cfg.train.precision {
        Precision::F32 => synth_with::<f32>(cfg, count, checkpoint, &exemplars, &contexts),
        Precision::F64 => synth_with::<f64>(cfg, count, checkpoint, &exemplars, &contexts),
    }
}

/// One row of the ablation table.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub mode: AblationMode,
    pub best_epoch: usize,
    pub synth_val_acc: f64,
    pub test_acc: Option<f64>,
}

fn finished(dir: &Path, epochs: usize) -> bool {
    read_metrics(&dir.join("metrics.csv")).is_ok_and(|rows| rows.last().is_some_and(|r| r.epoch == epochs))
        && dir.join("best.ckpt").exists()
}

/// Runs or resumes every mode under `<out>/<mode>` and summarizes the best
/// checkpoint of each.
pub fn run_ablation(base: &ResolvedConfig) -> Result<Vec<AblationRow>> {
    let exemplars = load_set_exemplars(base)?;
    let contexts = load_contexts(base)?;
    let test = load_test_set(base)?;
    let mut table = Vec::new();
    for mode in AblationMode::ALL {
        let mut cfg = base.clone();
        cfg.train.mode = mode;
        cfg.out_dir = base.out_dir.join(mode.name());
        if finished(&cfg.out_dir, cfg.train.epochs) {
            eprintln!("[{mode}] already complete in {}", cfg.out_dir.display());
        } else {
            match cfg.train.precision {
                Precision::F32 => train_with::<f32>(&cfg, true, &exemplars, &contexts, test.as_ref())?,
                Precision::F64 => train_with::<f64>(&cfg, true, &exemplars, &contexts, test.as_ref())?,
            };
        }
        let rows = read_metrics(&cfg.out_dir.join("metrics.csv"))?;
        let best = rows
            .iter()
            .fold(None::<&MetricRow>, |b, r| if b.is_none_or(|b| r.synth_val_acc > b.synth_val_acc) { Some(r) } else { b });
        let Some(best) = best else {
            table.push(AblationRow { mode, best_epoch: 0, synth_val_acc: f64::NAN, test_acc: None });
            continue;
        };
        let test_acc = match &test {
            Some(t) => Some(evaluate(&read_checkpoint(&cfg.out_dir.join("best.ckpt"))?.network::<f32>()?, t)?.accuracy),
            None => None,
        };
        table.push(AblationRow { mode, best_epoch: best.epoch, synth_val_acc: best.synth_val_acc, test_acc });
    }
    Ok(table)
}

/// Tab-separated summary with a header line.
pub fn format_ablation(rows: &[AblationRow]) -> String {
    let mut s = String::from("mode\tbest_epoch\tsynth_val_acc\ttest_acc\n");
    for r in rows {
        let test = r.test_acc.map(|a| format!("{a:.6}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(s, "{}\t{}\t{:.6}\t{test}", r.mode, r.best_epoch, r.synth_val_acc);
    }
    s
}

fn cmd_ablate(cfg_args: &ConfigArgs, overrides: &[(String, String)]) -> Result<()> {
    let mut args = ConfigArgs { preset: cfg_args.preset.clone(), config: cfg_args.config.clone() };
    let mut default_out = None;
    if let Some(p) = &args.preset {
        let base = p.split_once('-').map_or(p.as_str(), |(b, _)| b).to_string();
        default_out = Some(PathBuf::from(format!("runs/{base}-ablation")));
        args.preset = Some(base);
    }
    let mut cfg = resolve(&args, overrides)?;
    let out_overridden = overrides.iter().any(|(k, _)| k == "run.out_dir");
    if let (false, Some(d)) = (out_overridden, default_out) {
        cfg.out_dir = d;
    }
    let table = run_ablation(&cfg)?;
    let text = format_ablation(&table);
    let p = cfg.out_dir.join("summary.tsv");
    std::fs::write(&p, &text).map_err(|e| Error::io(&p, e))?;
    print!("{text}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn overrides_are_split_from_flags() {
        let (rest, ov) = split_overrides(os(&[
            "ctxforge", "train", "--preset", "mnist-full", "--epochs", "1", "--pgd.alpha=2/255", "--resume", "--out", "x",
        ]))
        .unwrap();
        assert_eq!(rest, os(&["ctxforge", "train", "--preset", "mnist-full", "--resume"]));
        assert_eq!(
            ov,
            [
                ("train.epochs".to_string(), "1".to_string()),
                ("pgd.alpha".into(), "2/255".into()),
                ("run.out_dir".into(), "x".into())
            ]
        );
        assert!(split_overrides(os(&["ctxforge", "train", "--seed"])).is_err());
    }

    #[test]
    fn ablation_table_lists_modes_in_order() {
        let rows: Vec<_> = AblationMode::ALL
            .iter()
            .map(|&mode| AblationRow { mode, best_epoch: 5, synth_val_acc: 0.5, test_acc: None })
            .collect();
        let text = format_ablation(&rows);
        let names: Vec<&str> = text.lines().skip(1).map(|l| l.split('\t').next().unwrap()).collect();
        assert_eq!(names, ["baseline", "random-context", "refinement-only", "image-as-context", "full"]);
    }
}
