use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use nsde_core::data::{inject_missing, load_csv, save_csv, synth, uniform_scale, ChannelStats, DataManifest, Dataset};
use nsde_core::model::{load_checkpoint, save_checkpoint, ModelKind};
use nsde_core::seed::derive;
use nsde_core::solver::{ode_error, strong_error, ConvergenceReport, Scheme};
use nsde_core::stability::{
    check_moment_bound, check_positivity_and_absorption, diffusion_comparison, dissipative_model, form_name, kind_name,
    prepare_run, robustness_curve, run_pipeline, test_seed, DiffusionComparison, MomentReport, PositivityReport,
    RobustnessCurve,
};
use nsde_core::train::{evaluate, gradient_suite, EpochRecord, GradReport, Metrics, Split};

use crate::config::{
    ConvergenceConfig, CorruptConfig, DataSource, DiffusionConfig, GradcheckConfig, RobustnessConfig, RunConfig,
    StabilityConfig, SynthConfig,
};

/// How a command that ran to completion ended.
pub enum Outcome {
    Ok,
    /// A check the command performs did not pass.
    CheckFailed(String),
    /// Training stopped on repeated numerical explosions.
    Aborted(String),
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_data(src: &DataSource) -> Result<Dataset> {
    match &src.csv {
        Some(p) => load_csv(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(synth(&src.synth)?),
    }
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

pub fn synth_cmd(cfg: SynthConfig, out: &Path) -> Result<Outcome> {
    let ds = synth(&cfg.synth)?;
    save_csv(&ds, &out.join("data.csv"))?;
    let manifest = DataManifest { seed: Some(cfg.synth.seed), ..DataManifest::describe(&ds) };
    write_json(&out.join("manifest.json"), &manifest)?;
    println!("{} samples, hash {}", ds.len(), manifest.content_hash);
    Ok(Outcome::Ok)
}

pub fn corrupt_cmd(cfg: CorruptConfig, input: &Path, out: &Path) -> Result<Outcome> {
    let target = out.join("data.csv");
    if same_file(input, &target) {
        bail!("refusing to overwrite the input file {}", input.display());
    }
    let ds = load_csv(input).with_context(|| format!("loading {}", input.display()))?;
    let c = inject_missing(&ds, cfg.missing_rate, cfg.seed)?;
    let (ds, collisions) = match cfg.uniform_length {
        Some(len) => {
            let r = uniform_scale(&c.dataset, Some(len))?;
            (r.dataset, Some(r.collisions))
        }
        None => (c.dataset, None),
    };
    save_csv(&ds, &target)?;
    let manifest = DataManifest {
        seed: Some(cfg.seed),
        missing_rate: Some(cfg.missing_rate),
        cells_dropped: Some(c.cells_dropped),
        collisions,
        ..DataManifest::describe(&ds)
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    println!("dropped {} cells, hash {}", c.cells_dropped, manifest.content_hash);
    Ok(Outcome::Ok)
}

#[derive(Serialize, Deserialize)]
struct DataReport {
    source: DataSource,
    content_hash: String,
    n_samples: usize,
    cells_dropped: usize,
    collisions: usize,
}

#[derive(Serialize, Deserialize)]
struct DerivedSeeds {
    model: u64,
    train: u64,
    test_eval: u64,
}

#[derive(Serialize, Deserialize)]
struct SplitSizes {
    train: usize,
    val: usize,
    test: usize,
}

#[derive(Serialize, Deserialize)]
struct HistoryReport {
    best_epoch: usize,
    best_val_loss: f64,
    stopped_early: bool,
    aborted: Option<String>,
    epochs: Vec<EpochRecord>,
}

#[derive(Serialize, Deserialize)]
struct TrainReport {
    command: String,
    config: RunConfig,
    seeds: DerivedSeeds,
    data: DataReport,
    split: SplitSizes,
    history: HistoryReport,
    test: Metrics,
}

#[derive(Serialize, Deserialize)]
struct Preprocess {
    stats: Option<ChannelStats>,
    split: Split,
}

pub fn train_cmd(mut cfg: RunConfig, input: Option<PathBuf>, out: &Path) -> Result<Outcome> {
    if let Some(p) = input {
        cfg.data.csv = Some(p);
    }
    let ds = load_data(&cfg.data)?;
    let run = run_pipeline(&ds, &cfg.spec())?;
    save_checkpoint(&run.model, &out.join("checkpoint.json"))?;
    write_json(&out.join("preprocess.json"), &Preprocess { stats: run.prepared.stats.clone(), split: run.prepared.split.clone() })?;
    fs::write(out.join("history.csv"), run.history.to_csv())?;
    write_json(&out.join("timing.json"), &serde_json::json!({ "epoch_seconds": run.history.wall_clock }))?;
    let sp = &run.prepared.split;
    let report = TrainReport {
        command: "train".into(),
        config: cfg,
        seeds: DerivedSeeds { model: run.spec.model.seed, train: run.spec.train.seed, test_eval: test_seed(run.spec.train.seed) },
        data: DataReport {
            source: DataSource::default(),
            content_hash: run.prepared.input_hash.clone(),
            n_samples: ds.len(),
            cells_dropped: run.prepared.cells_dropped,
            collisions: run.prepared.collisions,
        },
        split: SplitSizes { train: sp.train.len(), val: sp.val.len(), test: sp.test.len() },
        history: HistoryReport {
            best_epoch: run.history.best_epoch,
            best_val_loss: run.history.best_val_loss,
            stopped_early: run.history.stopped_early,
            aborted: run.history.aborted.clone(),
            epochs: run.history.epochs.clone(),
        },
        test: run.test.clone(),
    };
    let report = TrainReport { data: DataReport { source: report.config.data.clone(), ..report.data }, ..report };
    write_json(&out.join("metrics.json"), &report)?;
    println!(
        "best epoch {} of {}, test loss {:.6}, headline {:.4}",
        report.history.best_epoch,
        report.history.epochs.len(),
        report.test.loss,
        report.test.headline()
    );
    Ok(match run.history.aborted {
        Some(why) => Outcome::Aborted(why),
        None => Outcome::Ok,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitChoice {
    Train,
    Val,
    Test,
    All,
}

#[derive(Serialize)]
struct EvalReport {
    command: String,
    config: RunConfig,
    data_hash: String,
    /// Whether the data matched the training data, so the stored split applied.
    training_data: bool,
    split: SplitChoice,
    metrics: Metrics,
}

pub fn eval_cmd(run_dir: &Path, input: Option<PathBuf>, choice: SplitChoice, out: &Path) -> Result<Outcome> {
    let report: Value = read_json(&run_dir.join("metrics.json"))?;
    let cfg: RunConfig = serde_json::from_value(report.get("config").cloned().context("metrics.json has no config")?)
        .context("config in metrics.json")?;
    let trained_hash = report.pointer("/data/content_hash").and_then(Value::as_str).unwrap_or_default().to_string();
    let pre: Preprocess = read_json(&run_dir.join("preprocess.json"))?;
    let model = load_checkpoint(&run_dir.join("checkpoint.json"))?;
    let source = match input {
        Some(p) => DataSource { csv: Some(p), ..cfg.data.clone() },
        None => cfg.data.clone(),
    };
    let ds = load_data(&source)?;
    let spec = cfg.spec();
    let prepared = prepare_run(&ds, &spec, pre.stats.as_ref())?;
    let training_data = prepared.input_hash == trained_hash;
    let all: Vec<usize> = (0..ds.len()).collect();
    let idx = match (training_data, choice) {
        (true, SplitChoice::Train) => pre.split.train.clone(),
        (true, SplitChoice::Val) => pre.split.val.clone(),
        (true, SplitChoice::Test) => pre.split.test.clone(),
        _ => all,
    };
    let resolved = spec.resolved(&ds, prepared.data.output_dim);
    let metrics = evaluate(&model, &prepared.data, &idx, &resolved.solve, resolved.train.eval_mc, test_seed(resolved.train.seed))?;
    println!("n {}, loss {:.6}, headline {:.4}", metrics.n, metrics.loss, metrics.headline());
    write_json(
        &out.join("eval.json"),
        &EvalReport {
            command: "eval".into(),
            config: cfg,
            data_hash: prepared.input_hash,
            training_data,
            split: if training_data { choice } else { SplitChoice::All },
            metrics,
        },
    )?;
    Ok(Outcome::Ok)
}

#[derive(Serialize)]
struct StabilityReport {
    command: String,
    config: StabilityConfig,
    positivity: PositivityReport,
    moments: Vec<MomentReport>,
    passed: bool,
}

pub fn stability_cmd(cfg: StabilityConfig, out: &Path) -> Result<Outcome> {
    let positivity = check_positivity_and_absorption(ModelKind::Gsde, cfg.n_models, cfg.n_paths, derive(cfg.seed, &[0]))?;
    println!(
        "gsde positivity: min state {:e}, {} negative, {} absorption violations",
        positivity.min_state, positivity.negative_count, positivity.absorption_violations
    );
    let mut moments = Vec::new();
    for (i, &(m, sigma)) in cfg.moment_grid.iter().enumerate() {
        let r = check_moment_bound(m, sigma, &cfg.moment_z0, cfg.moment_t_end, cfg.moment_steps, cfg.moment_paths, derive(cfg.seed, &[1, i as u64]))?;
        println!("moment m={m} sigma={sigma}: sup {:.6} bound {:.6} ({})", r.sup_moment, r.bound, if r.passed { "ok" } else { "FAIL" });
        moments.push(r);
    }
    let passed = positivity.passed() && moments.iter().all(|m| m.passed);
    write_json(&out.join("stability.json"), &StabilityReport { command: "stability".into(), config: cfg, positivity, moments, passed })?;
    Ok(if passed { Outcome::Ok } else { Outcome::CheckFailed("a stability check failed".into()) })
}

#[derive(Serialize)]
struct RobustnessEntry {
    model_seed: u64,
    curve: RobustnessCurve,
    /// Largest W1 of the same curve with no perturbation.
    unperturbed_max: Option<f64>,
}

#[derive(Serialize)]
struct RobustnessReport {
    command: String,
    config: RobustnessConfig,
    data_hash: String,
    curves: Vec<RobustnessEntry>,
}

pub fn robustness_cmd(cfg: RobustnessConfig, out: &Path) -> Result<Outcome> {
    let ds = synth(&cfg.data)?;
    let mut curves = Vec::new();
    for &kind in &cfg.kinds {
        for s in 0..cfg.n_seeds {
            let model_seed = derive(cfg.seed, &[kind as u64, s as u64]);
            let model = dissipative_model(kind, ds.n_channels, ds.n_classes, &cfg.model, model_seed)?;
            let curve = robustness_curve(&model, &ds, cfg.rho, &cfg.curve, model_seed)?;
            let zero = robustness_curve(&model, &ds, 0.0, &cfg.curve, model_seed)?;
            let unperturbed_max = zero.points.iter().map(|p| p.w1).collect::<Option<Vec<f64>>>().map(|v| v.into_iter().fold(0.0, f64::max));
            fs::write(out.join(format!("robustness_{}_{s}.csv", kind_name(kind))), curve.to_csv())?;
            println!("{} seed {s}: spearman {:.2}", kind_name(kind), curve.spearman);
            curves.push(RobustnessEntry { model_seed, curve, unperturbed_max });
        }
    }
    write_json(&out.join("robustness.json"), &RobustnessReport { command: "robustness".into(), config: cfg, data_hash: ds.content_hash(), curves })?;
    Ok(Outcome::Ok)
}

#[derive(Serialize)]
struct DiffusionReport {
    command: String,
    config: DiffusionConfig,
    data_hash: String,
    comparison: DiffusionComparison,
}

pub fn diffusion_cmd(cfg: DiffusionConfig, out: &Path) -> Result<Outcome> {
    let ds = load_data(&cfg.run.data)?;
    let cmp = diffusion_comparison(&ds, &cfg.run.spec(), &cfg.forms)?;
    for v in &cmp.variants {
        let csv = cmp.curve_csv(v.form).expect("variant present");
        fs::write(out.join(format!("curve_{}.csv", form_name(v.form))), csv)?;
        let status = match (&v.aborted, cmp.worst == Some(v.form)) {
            (Some(_), _) => "aborted",
            (None, true) => "worst",
            _ => "",
        };
        println!("{:>9}: final test loss {:?} {status}", form_name(v.form), v.final_test_loss);
    }
    write_json(
        &out.join("diffusion.json"),
        &DiffusionReport { command: "diffusion-compare".into(), data_hash: ds.content_hash(), config: cfg, comparison: cmp },
    )?;
    Ok(Outcome::Ok)
}

/// Accepted slope range per scheme.
pub fn slope_range(scheme: Scheme) -> (f64, f64) {
    match scheme {
        Scheme::Euler => (0.4, 0.6),
        Scheme::Milstein => (0.85, 1.15),
    }
}

#[derive(Serialize)]
struct ConvergenceSummary {
    command: String,
    config: ConvergenceConfig,
    schemes: Vec<ConvergenceReport>,
    ode: ConvergenceReport,
    passed: bool,
}

pub fn convergence_cmd(cfg: ConvergenceConfig, out: &Path) -> Result<Outcome> {
    let mut schemes = Vec::new();
    let mut csv = String::from("scheme,dt,error\n");
    let mut passed = true;
    for scheme in [Scheme::Euler, Scheme::Milstein] {
        let r = strong_error(scheme, cfg.gbm, &cfg.levels, cfg.n_paths, cfg.seed)?;
        let (lo, hi) = slope_range(scheme);
        let ok = (lo..=hi).contains(&r.slope);
        passed &= ok;
        let name = if scheme == Scheme::Euler { "euler" } else { "milstein" };
        println!("{name}: slope {:.3} (expected {lo}..{hi}) {}", r.slope, if ok { "ok" } else { "FAIL" });
        for (dt, e) in r.dts.iter().zip(&r.errors) {
            csv.push_str(&format!("{name},{dt:?},{e:?}\n"));
        }
        schemes.push(r);
    }
    let ode = ode_error(1.0, &cfg.levels)?;
    println!("deterministic euler: slope {:.3}", ode.slope);
    fs::write(out.join("convergence.csv"), csv)?;
    write_json(&out.join("convergence.json"), &ConvergenceSummary { command: "convergence".into(), config: cfg, schemes, ode, passed })?;
    Ok(if passed { Outcome::Ok } else { Outcome::CheckFailed("a convergence slope is out of range".into()) })
}

#[derive(Serialize)]
struct GradcheckSummary {
    command: String,
    config: GradcheckConfig,
    report: GradReport,
    max_relative_error: f64,
    passed: bool,
}

pub fn gradcheck_cmd(cfg: GradcheckConfig, out: &Path) -> Result<Outcome> {
    let report = gradient_suite(cfg.seed)?;
    println!("network: {:e}", report.network);
    for (kind, err) in &report.models {
        println!("{}: {err:e}", kind_name(*kind));
    }
    let max = report.worst_model().max(report.network);
    let passed = max < cfg.tolerance;
    println!("max relative error {max:e}");
    write_json(&out.join("gradcheck.json"), &GradcheckSummary { command: "gradcheck".into(), config: cfg, report, max_relative_error: max, passed })?;
    Ok(if passed { Outcome::Ok } else { Outcome::CheckFailed(format!("max relative error {max:e}")) })
}
