//! One PASS/FAIL line per acceptance criterion.
//!
//! Criteria 4 to 9 are computed here and fail the test when red. Criteria 1
//! to 3 need multi-hour training runs, so they are read from the run
//! directories under `runs/` (or `$CTXFORGE_RUNS`) and reported as NOT RUN
//! when those are absent. Set `CTXFORGE_ACCEPT_STRICT=1` to make them fail
//! the test as well.

mod common;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use ctxforge::context::{biregular, sparse_ci_sample, SamplerConfig};
use ctxforge::data::{DataSource, TestSet};
use ctxforge::imageops::Image;
use ctxforge::refine::{pgd_refine, PgdConfig};
use ctxforge::tensor::{Architecture, ModelSpec, Network};
use ctxforge::trainer::{evaluate, read_metrics, MetricRow};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Pass,
    Fail,
    NotRun,
}

struct Report {
    lines: Vec<(usize, Status, String)>,
}

impl Report {
    fn add(&mut self, id: usize, status: Status, text: String) {
        let tag = match status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::NotRun => "NOT RUN",
        };
        // written to the raw stream so the line survives the harness's output capture
        let _ = writeln!(std::io::stderr().lock(), "criterion {id}: {tag:<7} {text}");
        self.lines.push((id, status, text));
    }

    fn check(&mut self, id: usize, ok: bool, text: String) {
        self.add(id, if ok { Status::Pass } else { Status::Fail }, text);
    }
}

fn runs_dir() -> PathBuf {
    std::env::var_os("CTXFORGE_RUNS").map(PathBuf::from).unwrap_or_else(|| common::repo_root().join("runs"))
}

/// Row of the checkpoint the trainer keeps: first maximum of synthetic accuracy.
fn selected(rows: &[MetricRow]) -> Option<&MetricRow> {
    rows.iter().fold(None, |b: Option<&MetricRow>, r| if b.is_none_or(|b| r.synth_val_acc > b.synth_val_acc) { Some(r) } else { b })
}

/// Test accuracy of the selected checkpoint of a finished run.
fn run_result(dir: &Path, epochs: usize) -> Result<f64, String> {
    let path = dir.join("metrics.csv");
    let rows = read_metrics(&path).map_err(|_| format!("no run at {}", path.display()))?;
    let last = rows.last().map_or(0, |r| r.epoch);
    if last < epochs {
        return Err(format!("{} stopped at epoch {last}/{epochs}", dir.display()));
    }
    selected(&rows).and_then(|r| r.test_acc).ok_or_else(|| format!("{} has no test accuracy", dir.display()))
}

fn ablation_table(path: &Path) -> Result<Vec<(String, f64)>, String> {
    let text = std::fs::read_to_string(path).map_err(|_| format!("no summary at {}", path.display()))?;
    text.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            let acc = f.get(3).and_then(|v| v.parse().ok()).ok_or_else(|| format!("no test accuracy in {l:?}"))?;
            Ok((f[0].to_string(), acc))
        })
        .collect()
}

fn mnist_full(r: &mut Report) {
    let full = [runs_dir().join("mnist-ablation/full"), runs_dir().join("mnist-full")];
    let found = full.iter().map(|d| run_result(d, 300)).find(Result::is_ok).unwrap_or_else(|| run_result(&full[0], 300));
    match found {
        Ok(acc) => r.check(1, acc >= 0.875, format!("MNIST full, 300 epochs: test accuracy {:.2}% (need >= 87.5%)", 100.0 * acc)),
        Err(e) => r.add(1, Status::NotRun, format!("MNIST full, 300 epochs: {e}")),
    }
    match run_result(&runs_dir().join("mnist-full-60"), 60) {
        Ok(acc) => r.check(1, acc >= 0.80, format!("MNIST full, 60 epochs: test accuracy {:.2}% (need >= 80%)", 100.0 * acc)),
        Err(e) => r.add(1, Status::NotRun, format!("MNIST full, 60 epochs: {e}")),
    }
}

fn mnist_ablation(r: &mut Report) {
    let table = match ablation_table(&runs_dir().join("mnist-ablation/summary.tsv")) {
        Ok(t) => t,
        Err(e) => return r.add(2, Status::NotRun, format!("MNIST ablation: {e}")),
    };
    let get = |m: &str| table.iter().find(|(n, _)| n == m).map(|(_, a)| *a).unwrap_or(f64::NAN);
    let (base, rc, full) = (get("baseline"), get("random-context"), get("full"));
    let singles = ["random-context", "refinement-only", "image-as-context"].map(get);
    let ok = base < rc && singles.iter().all(|s| full >= s - 0.01) && base >= 0.78;
    let list = table.iter().map(|(n, a)| format!("{n} {:.2}", 100.0 * a)).collect::<Vec<_>>().join(", ");
    r.check(2, ok, format!("MNIST ablation [{list}]: need baseline < random-context, full >= each single mode - 1.0, baseline >= 78"));
}

fn gtsrb(r: &mut Report) {
    match run_result(&runs_dir().join("gtsrb-full"), 300) {
        Ok(acc) => r.check(3, acc >= 0.92, format!("GTSRB full: test accuracy {:.2}% (need >= 92%)", 100.0 * acc)),
        Err(e) => r.add(3, Status::NotRun, format!("GTSRB full: {e} (needs pictogram assets and the GTSRB test set)")),
    }
    match ablation_table(&runs_dir().join("gtsrb-ablation/summary.tsv")) {
        Ok(t) => {
            let get = |m: &str| t.iter().find(|(n, _)| n == m).map_or(f64::NAN, |(_, a)| *a);
            let gap = get("full") - get("baseline");
            r.check(3, gap >= 0.15, format!("GTSRB full - baseline gap {:.2} points (need >= 15)", 100.0 * gap));
        }
        Err(e) => r.add(3, Status::NotRun, format!("GTSRB ablation gap: {e}")),
    }
}

fn gradients(r: &mut Report) {
    let start = Instant::now();
    let results = common::grad::suite();
    let secs = start.elapsed().as_secs_f64();
    let (what, worst) = results.iter().cloned().fold((String::new(), 0.0), |b, x| if x.1 > b.1 { x } else { b });
    let ok = worst < common::grad::TOL && secs < 60.0;
    r.check(4, ok, format!("gradient suite: {} checks, worst rel. error {worst:.2e} ({what}) < 1e-3, {secs:.1}s < 60s", results.len()));
}

fn biregular_suite(r: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut valid, mut invalid, mut bad) = (0, 0, Vec::new());
    while valid < 200 || invalid < 200 {
        let (n, m, e) = (rng.gen_range(1..=64), rng.gen_range(1..=64), rng.gen_range(1..=64));
        let d = m * e / n;
        let result = biregular(n, d, m, e, &mut rng);
        if (m * e) % n == 0 {
            if valid == 200 {
                continue;
            }
            valid += 1;
            match result {
                Ok(g) if g.context_degrees().iter().all(|&k| k == e) && g.object_degrees().iter().all(|&k| k == d) => {}
                _ => bad.push((n, m, e)),
            }
        } else {
            if invalid == 200 {
                continue;
            }
            invalid += 1;
            if result.is_ok() {
                bad.push((n, m, e));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    r.check(5, bad.is_empty() && secs < 10.0, format!("biregular suite: 200 valid + 200 indivisible triples, {} violations, {secs:.2}s < 10s", bad.len()));
}

fn pgd_suite(r: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let net = Network::<f32>::init(ModelSpec::new(Architecture::Mnist2Conv, [1, 12, 12], 10).unwrap(), &mut rng);
    let mut violations = 0;
    for _ in 0..200 {
        let cfg = PgdConfig {
            alpha: rng.gen_range(1e-3..0.05),
            iterations: rng.gen_range(0..8),
            eps_fg: rng.gen_range(0.0..0.1),
            eps_bg: rng.gen_range(0.0..0.1),
            init_noise: rng.gen_range(0.0..0.02),
            bounds: (0.0, 1.0),
        };
        let x = Image::new(12, 12, 1, (0..144).map(|_| rng.gen()).collect(), None).unwrap();
        let mask: Vec<bool> = (0..144).map(|_| rng.gen()).collect();
        let out = pgd_refine(&net, &x, rng.gen_range(0..10), &mask, &cfg, &mut rng).unwrap();
        for ((&a, &b), &m) in x.pixels().iter().zip(out.pixels()).zip(&mask) {
            let eps = if m { cfg.eps_fg } else { cfg.eps_bg };
            if (b as f64 - a as f64).abs() > eps + cfg.init_noise || !(0.0..=1.0).contains(&b) {
                violations += 1;
            }
        }
    }
    let gnet = Network::<f32>::init(ModelSpec::new(Architecture::Gtsrb5Conv, [3, 16, 16], 43).unwrap(), &mut rng);
    let mut bg_changed = 0;
    for label in 0..10 {
        let x = Image::new(16, 16, 3, (0..768).map(|_| rng.gen()).collect(), None).unwrap();
        let mask: Vec<bool> = (0..256).map(|_| rng.gen()).collect();
        let out = pgd_refine(&gnet, &x, label, &mask, &PgdConfig::gtsrb(), &mut rng).unwrap();
        bg_changed += x.pixels().iter().zip(out.pixels()).enumerate().filter(|(i, (a, b))| !mask[i / 3] && a.to_bits() != b.to_bits()).count();
    }
    let secs = start.elapsed().as_secs_f64();
    r.check(
        6,
        violations == 0 && bg_changed == 0 && secs < 30.0,
        format!("PGD containment: 200 random configs, {violations} ball violations, {bg_changed} GTSRB background pixels changed, {secs:.1}s < 30s"),
    );
}

fn determinism(r: &mut Report) {
    let tmp = tempfile::tempdir().unwrap();
    let train = |name: &str| {
        let out = tmp.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_ctxforge"))
            .args(["train", "--preset", "shapes", "--epochs", "2", "--out", out.to_str().unwrap()])
            .current_dir(common::repo_root())
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        out
    };
    let (a, b) = (train("a"), train("b"));
    let files = ["best.ckpt", "last.ckpt", "metrics.csv"];
    let same = files.iter().filter(|f| std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap()).count();
    r.check(7, same == files.len(), format!("determinism: two 2-epoch f64 runs, {same}/3 artifacts byte-identical"));
}

fn decorrelation(r: &mut Report) {
    let start = Instant::now();
    let cfg = SamplerConfig { n: 4, m: 4, e: 4, p: 0.5 };
    let labels = [0usize, 1, 2, 1];
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let mut next = 0;
        let out = sparse_ci_sample(
            |_| {
                next += 1;
                Ok((next - 1, labels[next - 1]))
            },
            |_| Ok(()),
            |_, _| Ok(()),
            &cfg,
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
        .unwrap();
        for ctx in 0..4 {
            let mut cov = 0.0;
            for obj in 0..4 {
                let e: Vec<_> = out.iter().filter(|s| s.object == obj).collect();
                let k = e.len() as f64;
                let ind = |s: &&ctxforge::context::CiSample<(), usize>| if s.context == ctx { 1.0 } else { 0.0 };
                let ml = e.iter().map(|s| s.label as f64).sum::<f64>() / k;
                let mc = e.iter().map(ind).sum::<f64>() / k;
                cov += k / out.len() as f64 * e.iter().map(|s| (s.label as f64 - ml) * (ind(s) - mc)).sum::<f64>() / k;
            }
            worst = worst.max(cov.abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    r.check(8, worst == 0.0 && secs < 1.0, format!("label-context covariance given objects: max |cov| {worst:e} over 20 draws, {secs:.3}s < 1s"));
}

fn uniform_loss(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for arch in [Architecture::Mnist2Conv, Architecture::Gtsrb5Conv] {
        let spec = ModelSpec::standard(arch);
        let mut net = Network::<f32>::init(spec.clone(), &mut rng);
        net.zero_head();
        let [c, h, w] = spec.input;
        let images: Vec<Image> = (0..20).map(|_| Image::new(h, w, c, (0..h * w * c).map(|_| rng.gen()).collect(), None).unwrap()).collect();
        let labels = (0..20).map(|i| i % spec.classes).collect();
        let set = TestSet::new(images, labels, DataSource::Synthetic, spec.classes).unwrap();
        let ev = evaluate(&net, &set).unwrap();
        let k = spec.classes as f64;
        let err = (ev.mean_loss - k.ln()).abs();
        r.check(9, err < 1e-4, format!("zero head, K={}: mean loss {:.6} vs ln K {:.6}, |diff| {err:.1e} < 1e-4", spec.classes, ev.mean_loss, k.ln()));
    }
}

#[test]
fn acceptance() {
    let mut r = Report { lines: Vec::new() };
    mnist_full(&mut r);
    mnist_ablation(&mut r);
    gtsrb(&mut r);
    gradients(&mut r);
    biregular_suite(&mut r);
    pgd_suite(&mut r);
    determinism(&mut r);
    decorrelation(&mut r);
    uniform_loss(&mut r);

    let strict = std::env::var_os("CTXFORGE_ACCEPT_STRICT").is_some();
    let failed: Vec<_> = r
        .lines
        .iter()
        .filter(|(id, s, _)| *s == Status::Fail && (*id >= 4 || strict) || strict && *s == Status::NotRun)
        .collect();
    assert!(failed.is_empty(), "red criteria: {failed:?}");
}
