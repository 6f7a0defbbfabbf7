use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{inject_missing, normalize, uniform_scale, ChannelStats, Dataset};
use crate::error::Result;
use crate::model::{DiffusionForm, ModelConfig, ModelKind, SdeModel};
use crate::seed::derive;
use crate::solver::{Scheme, SolveConfig};
use crate::train::{evaluate, split, train, Metrics, Prepared, Split, TrainConfig, TrainHistory, validation_seed};

const CORRUPT: u64 = 5;
const SPLIT: u64 = 6;
const MODEL: u64 = 7;
const TRAIN: u64 = 8;

/// One end-to-end run: corrupt, optionally rescale, split, normalize with
/// training statistics, train, and evaluate on the test split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSpec {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub solve: SolveConfig,
    pub missing_rate: f64,
    /// Resample onto a uniform grid of this length before training.
    pub uniform_length: Option<usize>,
    pub normalize: bool,
    /// Root seed; the model, training and corruption seeds derive from it.
    pub seed: u64,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            model: ModelConfig::new(ModelKind::Lnsde, 1, 1),
            train: TrainConfig::default(),
            solve: SolveConfig::default(),
            missing_rate: 0.0,
            uniform_length: None,
            normalize: true,
            seed: 0,
        }
    }
}

impl RunSpec {
    /// Copy with the derived seeds and the dataset's dimensions filled in.
    pub fn resolved(&self, ds: &Dataset, prepared_out: usize) -> Self {
        let mut r = self.clone();
        r.model.input_dim = ds.n_channels;
        r.model.output_dim = prepared_out;
        r.model.seed = derive(self.seed, &[MODEL]);
        r.train.seed = derive(self.seed, &[TRAIN]);
        r
    }
}

/// Data after the preprocessing steps of a run.
#[derive(Clone, Debug)]
pub struct PreparedRun {
    pub data: Prepared,
    pub split: Split,
    /// Normalization statistics, fit on the training split unless given.
    pub stats: Option<ChannelStats>,
    /// Hash of the dataset as given, before corruption.
    pub input_hash: String,
    pub cells_dropped: usize,
    pub collisions: usize,
}

/// Corrupts, optionally rescales, splits and normalizes `ds` as `spec`
/// prescribes. Passing `stats` reuses earlier statistics instead of
/// fitting them.
pub fn prepare_run(ds: &Dataset, spec: &RunSpec, stats: Option<&ChannelStats>) -> Result<PreparedRun> {
    let input_hash = ds.content_hash();
    let corrupted = inject_missing(ds, spec.missing_rate, derive(spec.seed, &[CORRUPT]))?;
    let (mut work, collisions) = match spec.uniform_length {
        Some(len) => {
            let r = uniform_scale(&corrupted.dataset, Some(len))?;
            (r.dataset, r.collisions)
        }
        None => (corrupted.dataset, 0),
    };
    let sp = split(&work.labels(), spec.train.split, derive(spec.seed, &[SPLIT]))?;
    let stats = if spec.normalize {
        let st = match stats {
            Some(s) => s.clone(),
            None => ChannelStats::fit(&work.subset(&sp.train)),
        };
        work = normalize(&work, &st)?;
        Some(st)
    } else {
        None
    };
    let data = Prepared::new(&work, spec.train.task, spec.train.path_scheme)?;
    Ok(PreparedRun { data, split: sp, stats, input_hash, cells_dropped: corrupted.cells_dropped, collisions })
}

/// Seed for the final test evaluation of a run with training seed `train_seed`.
pub fn test_seed(train_seed: u64) -> u64 {
    derive(validation_seed(train_seed), &[1])
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    /// The spec with derived seeds and dimensions.
    pub spec: RunSpec,
    pub model: SdeModel,
    pub history: TrainHistory,
    pub test: Metrics,
    pub prepared: PreparedRun,
}

pub fn run_pipeline(ds: &Dataset, spec: &RunSpec) -> Result<RunOutcome> {
    let prepared = prepare_run(ds, spec, None)?;
    let (data, sp) = (&prepared.data, &prepared.split);
    let resolved = spec.resolved(ds, data.output_dim);
    let model = SdeModel::new(resolved.model.clone())?;
    let out = train(model, data, sp, &resolved.train, &resolved.solve)?;
    let test_idx = if sp.test.is_empty() { &sp.val } else { &sp.test };
    let test = evaluate(&out.model, data, test_idx, &resolved.solve, resolved.train.eval_mc, test_seed(resolved.train.seed))?;
    Ok(RunOutcome { spec: resolved, model: out.model, history: out.history, test, prepared })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub kind: ModelKind,
    pub use_control: bool,
    pub missing_rate: f64,
    pub seed: u64,
    pub accuracy: f64,
    pub test_loss: f64,
    pub epochs: usize,
    pub aborted: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kind: ModelKind,
    pub use_control: bool,
    pub missing_rate: f64,
    pub mean: f64,
    /// Sample standard deviation over seeds; 0 for a single seed.
    pub sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub cells: Vec<SweepCell>,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn accuracies(&self, kind: ModelKind, use_control: bool, rate: f64) -> Vec<f64> {
        self.cells
            .iter()
            .filter(|c| c.kind == kind && c.use_control == use_control && c.missing_rate == rate)
            .map(|c| c.accuracy)
            .collect()
    }

    pub fn mean(&self, kind: ModelKind, use_control: bool, rate: f64) -> Option<f64> {
        self.rows.iter().find(|r| r.kind == kind && r.use_control == use_control && r.missing_rate == rate).map(|r| r.mean)
    }

    /// `kind,use_control,missing_rate,mean,sd` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,use_control,missing_rate,mean,sd\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{:?},{:?},{:?}\n", kind_name(r.kind), r.use_control, r.missing_rate, r.mean, r.sd));
        }
        s
    }
}

pub fn kind_name(kind: ModelKind) -> String {
    serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

pub fn form_name(form: DiffusionForm) -> String {
    serde_json::to_value(form).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, sd)
}

/// Accuracy over every (variant, rate, seed) cell with the hyperparameters
/// of `base` held fixed. A variant is a model kind plus whether the drift
/// sees the controlled path.
pub fn missing_rate_sweep(ds: &Dataset, base: &RunSpec, variants: &[(ModelKind, bool)], rates: &[f64], seeds: &[u64]) -> Result<SweepReport> {
    let jobs: Vec<(ModelKind, bool, f64, u64)> = variants
        .iter()
        .flat_map(|&(k, c)| rates.iter().flat_map(move |&r| seeds.iter().map(move |&s| (k, c, r, s))))
        .collect();
    let cells: Vec<SweepCell> = jobs
        .par_iter()
        .map(|&(kind, use_control, missing_rate, seed)| {
            let mut spec = base.clone();
            spec.model.kind = kind;
            spec.model.use_control = use_control;
            spec.missing_rate = missing_rate;
            spec.seed = seed;
            let out = run_pipeline(ds, &spec)?;
            Ok(SweepCell {
                kind,
                use_control,
                missing_rate,
                seed,
                accuracy: out.test.headline(),
                test_loss: out.test.loss,
                epochs: out.history.epochs.len(),
                aborted: out.history.aborted,
            })
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for &(kind, use_control) in variants {
        for &missing_rate in rates {
            let acc: Vec<f64> = cells
                .iter()
                .filter(|c| c.kind == kind && c.use_control == use_control && c.missing_rate == missing_rate)
                .map(|c| c.accuracy)
                .collect();
            let (mean, sd) = mean_sd(&acc);
            rows.push(SweepRow { kind, use_control, missing_rate, mean, sd });
        }
    }
    Ok(SweepReport { cells, rows })
}

/// The six diffusion variants compared on a common drift.
pub const DIFFUSION_VARIANTS: [DiffusionForm; 6] = [
    DiffusionForm::Sqrt,
    DiffusionForm::Cubic,
    DiffusionForm::Constant,
    DiffusionForm::Additive,
    DiffusionForm::Linear,
    DiffusionForm::Network,
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantCurve {
    pub form: DiffusionForm,
    pub history: TrainHistory,
    /// Test loss after the last completed epoch.
    pub final_test_loss: Option<f64>,
    pub aborted: Option<String>,
}

impl VariantCurve {
    /// Finished every epoch with finite losses.
    pub fn finite(&self, epochs: usize) -> bool {
        self.aborted.is_none()
            && self.history.epochs.len() == epochs
            && self.history.epochs.iter().all(|e| e.train_loss.is_finite() && e.test_loss.is_some_and(f64::is_finite))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionComparison {
    pub seed: u64,
    pub epochs: usize,
    pub variants: Vec<VariantCurve>,
    /// Variant with the highest final test loss among those that did not abort.
    pub worst: Option<DiffusionForm>,
}

impl DiffusionComparison {
    pub fn variant(&self, form: DiffusionForm) -> Option<&VariantCurve> {
        self.variants.iter().find(|v| v.form == form)
    }

    /// `epoch,train_loss,val_loss,test_loss,flag`; the last row's flag is
    /// `aborted` or `worst` when that applies.
    pub fn curve_csv(&self, form: DiffusionForm) -> Option<String> {
        let v = self.variant(form)?;
        let flag = if v.aborted.is_some() {
            "aborted"
        } else if self.worst == Some(form) {
            "worst"
        } else {
            ""
        };
        let mut s = String::from("epoch,train_loss,val_loss,test_loss,flag\n");
        let n = v.history.epochs.len();
        for (i, e) in v.history.epochs.iter().enumerate() {
            let t = e.test_loss.map(|t| format!("{t:?}")).unwrap_or_default();
            let f = if i + 1 == n { flag } else { "" };
            s.push_str(&format!("{},{:?},{:?},{},{}\n", e.epoch, e.train_loss, e.val_loss, t, f));
        }
        if n == 0 {
            s.push_str(&format!("0,,,,{flag}\n"));
        }
        Some(s)
    }
}

/// Trains one model per diffusion variant on the same data, split and
/// seeds for a fixed number of epochs with early stopping off, tracking
/// test loss every epoch. Aborted variants are recorded and the suite
/// continues.
pub fn diffusion_comparison(ds: &Dataset, base: &RunSpec, forms: &[DiffusionForm]) -> Result<DiffusionComparison> {
    let mut spec = base.clone();
    spec.train.patience = None;
    spec.train.track_test = true;
    let variants: Vec<VariantCurve> = forms
        .par_iter()
        .map(|&form| {
            let mut s = spec.clone();
            s.model.diffusion = Some(form);
            let out = run_pipeline(ds, &s)?;
            let final_test_loss = out.history.epochs.last().and_then(|e| e.test_loss);
            Ok(VariantCurve { form, final_test_loss, aborted: out.history.aborted.clone(), history: out.history })
        })
        .collect::<Result<_>>()?;
    let worst = variants
        .iter()
        .filter(|v| v.aborted.is_none())
        .filter_map(|v| v.final_test_loss.map(|l| (v.form, l)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(f, _)| f);
    Ok(DiffusionComparison { seed: base.seed, epochs: spec.train.max_epochs, variants, worst })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuntimeReport {
    pub euler_secs: Vec<f64>,
    pub milstein_secs: Vec<f64>,
    pub euler_median: f64,
    pub milstein_median: f64,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) }
}

/// Wall-clock seconds per training epoch under each scheme on the same
/// workload, alternating schemes across `rounds` to spread drift in
/// machine load evenly.
pub fn solver_runtime(ds: &Dataset, base: &RunSpec, rounds: usize, epochs_per_round: usize) -> Result<RuntimeReport> {
    let mut spec = base.clone();
    spec.train.max_epochs = epochs_per_round;
    spec.train.patience = None;
    let (mut euler, mut milstein) = (Vec::new(), Vec::new());
    for _ in 0..rounds {
        for scheme in [Scheme::Euler, Scheme::Milstein] {
            spec.solve.scheme = scheme;
            let started = Instant::now();
            let out = run_pipeline(ds, &spec)?;
            let per_epoch = if out.history.wall_clock.is_empty() {
                started.elapsed().as_secs_f64()
            } else {
                out.history.wall_clock.iter().sum::<f64>() / out.history.wall_clock.len() as f64
            };
            match scheme {
                Scheme::Euler => euler.push(per_epoch),
                Scheme::Milstein => milstein.push(per_epoch),
            }
        }
    }
    Ok(RuntimeReport { euler_median: median(&euler), milstein_median: median(&milstein), euler_secs: euler, milstein_secs: milstein })
}
