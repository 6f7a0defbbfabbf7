use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, AdamState, Backend, Eval, Mode, Tape, Tensor};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{BoundModel, SdeModel};
use crate::path::{ControlledPath, IrregularSeries, PathScheme};
use crate::seed::derive;
use crate::solver::{solve, BatchNoise, Record, SolveConfig};
use crate::train::metrics::{argmax, auroc, cross_entropy, masked_mse, softmax_rows};
use crate::train::Split;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Classification,
    /// Predict the observed cells of the middle time point, held out of the input.
    Interpolation,
    /// Predict the observed cells of the last time point, held out of the input.
    Forecasting,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub task: Task,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Learning-rate multiplier for the readout's final layer.
    pub readout_lr_multiplier: f64,
    /// Epochs without validation improvement before stopping; `None`
    /// trains for `max_epochs`.
    pub patience: Option<usize>,
    pub split: [f64; 3],
    pub clip_norm: Option<f64>,
    pub path_scheme: PathScheme,
    /// Brownian draws averaged per prediction during evaluation.
    pub eval_mc: usize,
    /// Also evaluate the test split after every epoch.
    pub track_test: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            task: Task::Classification,
            max_epochs: 100,
            batch_size: 32,
            lr: 1e-3,
            readout_lr_multiplier: 100.0,
            patience: Some(10),
            split: [0.7, 0.15, 0.15],
            clip_norm: Some(10.0),
            path_scheme: PathScheme::NaturalCubic,
            eval_mc: 1,
            track_test: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_mc == 0 || self.patience == Some(0) {
            return Err(Error::InvalidArgument("batch_size, eval_mc and patience must be positive".into()));
        }
        if !(self.lr >= 0.0) || !(self.readout_lr_multiplier >= 0.0) {
            return Err(Error::InvalidArgument("learning rates must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Class(usize),
    Values { values: Vec<f64>, mask: Vec<f64> },
}

/// Paths and targets built once per dataset.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub task: Task,
    pub paths: Vec<ControlledPath>,
    pub targets: Vec<Target>,
    pub input_dim: usize,
    pub output_dim: usize,
    pub n_classes: usize,
}

fn without_row(s: &IrregularSeries, k: usize) -> Result<IrregularSeries> {
    let d = s.n_channels;
    let keep = |i: &usize| *i != k;
    let times = (0..s.len()).filter(keep).map(|i| s.times[i]).collect();
    let values = (0..s.len()).filter(keep).flat_map(|i| s.values[i * d..(i + 1) * d].to_vec()).collect();
    let mask = (0..s.len()).filter(keep).flat_map(|i| s.mask[i * d..(i + 1) * d].to_vec()).collect();
    IrregularSeries::new(times, values, mask, d, s.label)
}

impl Prepared {
    pub fn new(ds: &Dataset, task: Task, scheme: PathScheme) -> Result<Self> {
        let mut paths = Vec::with_capacity(ds.len());
        let mut targets = Vec::with_capacity(ds.len());
        for s in &ds.samples {
            match task {
                Task::Classification => {
                    let label = s.label.ok_or_else(|| Error::InvalidArgument("classification needs labels".into()))?;
                    paths.push(ControlledPath::build(s, scheme)?);
                    targets.push(Target::Class(label));
                }
                Task::Interpolation | Task::Forecasting => {
                    if s.len() < 3 {
                        return Err(Error::TooFewKnots(s.len() - 1));
                    }
                    let k = if task == Task::Forecasting { s.len() - 1 } else { s.len() / 2 };
                    let d = s.n_channels;
                    let values = s.values[k * d..(k + 1) * d].to_vec();
                    let mask = (0..d).map(|c| if s.observed(k, c) { 1.0 } else { 0.0 }).collect();
                    paths.push(ControlledPath::build(&without_row(s, k)?, scheme)?);
                    targets.push(Target::Values { values, mask });
                }
            }
        }
        let output_dim = if task == Task::Classification { ds.n_classes } else { ds.n_channels };
        Ok(Self { task, paths, targets, input_dim: ds.n_channels, output_dim, n_classes: ds.n_classes })
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    fn labels(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter()
            .map(|&i| match self.targets[i] {
                Target::Class(c) => c,
                Target::Values { .. } => 0,
            })
            .collect()
    }

    fn value_targets(&self, idx: &[usize]) -> (Tensor, Tensor) {
        let d = self.output_dim;
        let mut v = Vec::with_capacity(idx.len() * d);
        let mut m = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            if let Target::Values { values, mask } = &self.targets[i] {
                v.extend_from_slice(values);
                m.extend_from_slice(mask);
            }
        }
        (Tensor::matrix(idx.len(), d, v), Tensor::matrix(idx.len(), d, m))
    }

    pub(crate) fn paths_of(&self, idx: &[usize]) -> Vec<&ControlledPath> {
        idx.iter().map(|&i| &self.paths[i]).collect()
    }
}

pub(crate) fn loss_of<B: Backend>(b: &mut B, data: &Prepared, idx: &[usize], out: &B::T) -> Result<B::T> {
    match data.task {
        Task::Classification => b.softmax_cross_entropy(out, &data.labels(idx)),
        _ => {
            let (t, m) = data.value_targets(idx);
            b.masked_mse(out, &t, &m)
        }
    }
}

// Seed streams.
const BROWNIAN: u64 = 1;
const DROPOUT: u64 = 2;
const SHUFFLE: u64 = 3;
const EVAL: u64 = 4;

struct Survivors<B: Backend> {
    backend: B,
    bound: BoundModel<B::T>,
    /// Indices that solved cleanly, in batch order.
    active: Vec<usize>,
    exploded: Vec<usize>,
    terminal: B::T,
}

/// Solves `idx`, dropping rows that explode until the rest solve cleanly.
/// Fails with `NumericalExplosion` only when every row explodes.
fn solve_surviving<B: Backend>(
    make: impl Fn() -> B,
    model: &SdeModel,
    data: &Prepared,
    idx: &[usize],
    seed_of: impl Fn(usize) -> u64,
    scfg: &SolveConfig,
) -> Result<Survivors<B>> {
    let scfg = SolveConfig { record: Record::TerminalOnly, ..scfg.clone() };
    let mut active = idx.to_vec();
    let mut exploded = Vec::new();
    loop {
        let mut backend = make();
        let bound = model.bind(&mut backend);
        let noise = BatchNoise::new(active.iter().map(|&i| seed_of(i)).collect(), model.config.latent_dim, scfg.dt());
        match solve(&mut backend, &bound, &data.paths_of(&active), &noise, &scfg) {
            Ok(traj) => {
                let terminal = traj.terminal().clone();
                return Ok(Survivors { backend, bound, active, exploded, terminal });
            }
            Err(Error::NumericalExplosion { step, rows }) => {
                let bad: Vec<usize> = rows.iter().map(|&r| active[r]).collect();
                exploded.extend_from_slice(&bad);
                active.retain(|i| !bad.contains(i));
                if active.is_empty() {
                    return Err(Error::NumericalExplosion { step, rows: (0..idx.len()).collect() });
                }
            }
            Err(e) => return Err(e),
        }
    }
}

/// Per-sample predictions averaged over Brownian draws.
#[derive(Clone, Debug)]
pub struct Predictions {
    /// `[n, output_dim]`; rows of exploded samples are zero.
    pub outputs: Tensor,
    pub exploded: Vec<bool>,
}

const EVAL_CHUNK: usize = 256;

/// Eval-mode predictions for `idx`, averaging outputs over `n_mc` draws.
/// Draw `r` of sample `i` uses Brownian seed `derive(seed, [i, r])`.
pub fn predict(model: &SdeModel, data: &Prepared, idx: &[usize], scfg: &SolveConfig, n_mc: usize, seed: u64) -> Result<Predictions> {
    let d = data.output_dim;
    let chunks: Vec<&[usize]> = idx.chunks(EVAL_CHUNK).collect();
    let parts: Vec<Result<(Vec<f64>, Vec<bool>)>> = chunks
        .par_iter()
        .map(|chunk| {
            let mut sum = vec![0.0; chunk.len() * d];
            let mut bad = vec![false; chunk.len()];
            let pos = |i: usize| chunk.iter().position(|&j| j == i).expect("member");
            for r in 0..n_mc {
                let seed_of = |i: usize| derive(seed, &[i as u64, r as u64]);
                let mut sv = match solve_surviving(|| Eval, model, data, chunk, seed_of, scfg) {
                    Ok(sv) => sv,
                    Err(Error::NumericalExplosion { .. }) => {
                        bad.iter_mut().for_each(|b| *b = true);
                        continue;
                    }
                    Err(err) => return Err(err),
                };
                for &i in &sv.exploded {
                    bad[pos(i)] = true;
                }
                let out = sv.bound.readout(&mut sv.backend, &sv.terminal, Mode::Eval)?;
                for (row, &i) in sv.active.iter().enumerate() {
                    let p = pos(i);
                    for c in 0..d {
                        sum[p * d + c] += out.at(row, c);
                    }
                }
            }
            for (p, b) in bad.iter().enumerate() {
                for c in 0..d {
                    sum[p * d + c] = if *b { 0.0 } else { sum[p * d + c] / n_mc as f64 };
                }
            }
            Ok((sum, bad))
        })
        .collect();
    let mut outputs = Vec::with_capacity(idx.len() * d);
    let mut exploded = Vec::with_capacity(idx.len());
    for p in parts {
        let (o, b) = p?;
        outputs.extend(o);
        exploded.extend(b);
    }
    Ok(Predictions { outputs: Tensor::matrix(idx.len(), d, outputs), exploded })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    /// Cross-entropy for classification, MSE otherwise.
    pub loss: f64,
    pub accuracy: Option<f64>,
    pub auroc: Option<f64>,
    pub mse: Option<f64>,
    pub n_exploded: usize,
}

impl Metrics {
    /// Accuracy for classification, MSE otherwise.
    pub fn headline(&self) -> f64 {
        self.accuracy.or(self.mse).unwrap_or(self.loss)
    }
}

/// Metrics on `idx`. Exploded samples count as misclassified with loss
/// `ln C` (a uniform prediction) and score 0.5 for AUROC; for regression
/// they predict zero.
pub fn evaluate(model: &SdeModel, data: &Prepared, idx: &[usize], scfg: &SolveConfig, n_mc: usize, seed: u64) -> Result<Metrics> {
    if idx.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate an empty split".into()));
    }
    let p = predict(model, data, idx, scfg, n_mc, seed)?;
    let n_exploded = p.exploded.iter().filter(|&&b| b).count();
    let n = idx.len();
    match data.task {
        Task::Classification => {
            let labels = data.labels(idx);
            // Exploded rows hold zero logits, the uniform prediction with loss ln C.
            let loss = cross_entropy(&p.outputs, &labels)?;
            let hits = (0..n).filter(|&r| !p.exploded[r] && argmax(p.outputs.row(r)) == labels[r]).count();
            let acc = hits as f64 / n as f64;
            let auroc = if data.n_classes == 2 && labels.contains(&0) && labels.contains(&1) {
                let probs = softmax_rows(&p.outputs);
                let scores: Vec<f64> = (0..n).map(|r| if p.exploded[r] { 0.5 } else { probs.at(r, 1) }).collect();
                Some(auroc(&scores, &labels)?)
            } else {
                None
            };
            Ok(Metrics { n, loss, accuracy: Some(acc), auroc, mse: None, n_exploded })
        }
        _ => {
            let (t, m) = data.value_targets(idx);
            let mse = masked_mse(&p.outputs, &t, &m)?;
            Ok(Metrics { n, loss: mse, accuracy: None, auroc: None, mse: Some(mse), n_exploded })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_metric: f64,
    pub test_loss: Option<f64>,
    /// Training samples excluded from this epoch's gradients by explosion.
    pub exploded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch with the lowest validation loss; 0 if none completed.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    /// Set when training stopped on repeated numerical explosions.
    pub aborted: Option<String>,
    /// Seconds per epoch; not part of any deterministic output.
    #[serde(skip)]
    pub wall_clock: Vec<f64>,
}

impl TrainHistory {
    /// `epoch,train_loss,val_loss,val_metric` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,val_metric\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{:?},{:?},{:?}\n", e.epoch, e.train_loss, e.val_loss, e.val_metric));
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the best validation epoch.
    pub model: SdeModel,
    pub history: TrainHistory,
}

/// Consecutive batches with most samples exploded before training aborts.
pub const ABORT_AFTER_BATCHES: usize = 3;

/// Mini-batch training with Adam, early stopping on validation loss, and
/// restoration of the best epoch's parameters.
///
/// Brownian seeds are derived per (epoch, batch, sample) from `tcfg.seed`,
/// so a run is a pure function of its inputs. Validation uses fixed seeds
/// across epochs. Repeated explosions end training early with
/// `history.aborted` set rather than an error.
pub fn train(model: SdeModel, data: &Prepared, split: &Split, tcfg: &TrainConfig, scfg: &SolveConfig) -> Result<TrainOutcome> {
    tcfg.validate()?;
    scfg.validate()?;
    if split.train.is_empty() || split.val.is_empty() {
        return Err(Error::InvalidArgument("training needs nonempty train and validation splits".into()));
    }
    if model.config.input_dim != data.input_dim || model.config.output_dim != data.output_dim {
        return Err(Error::Shape(format!(
            "model maps {} -> {}, data needs {} -> {}",
            model.config.input_dim, model.config.output_dim, data.input_dim, data.output_dim
        )));
    }
    let mut model = model;
    let adam_cfg = AdamConfig { lr: tcfg.lr, clip_norm: tcfg.clip_norm, ..AdamConfig::default() };
    let mut adam = AdamState::new(&model.params(), adam_cfg, model.lr_multipliers(tcfg.readout_lr_multiplier))?;
    let eval_seed = derive(tcfg.seed, &[EVAL]);
    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        stopped_early: false,
        aborted: None,
        wall_clock: Vec::new(),
    };
    let mut best = model.clone();
    let mut streak = 0;

    'epochs: for epoch in 1..=tcfg.max_epochs {
        let started = Instant::now();
        let mut order = split.train.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive(tcfg.seed, &[SHUFFLE, epoch as u64])));
        let mut loss_sum = 0.0;
        let mut used = 0;
        let mut exploded_total = 0;
        for (bi, batch) in order.chunks(tcfg.batch_size).enumerate() {
            let seed_of = |i: usize| derive(tcfg.seed, &[BROWNIAN, epoch as u64, bi as u64, i as u64]);
            let dropout_seed = derive(tcfg.seed, &[DROPOUT, epoch as u64, bi as u64]);
            let (active, exploded) = match solve_surviving(Tape::new, &model, data, batch, seed_of, scfg) {
                Ok(sv) => {
                    let Survivors { backend: mut tape, bound, active, exploded, terminal } = sv;
                    let out = bound.readout(&mut tape, &terminal, Mode::Train { dropout_seed })?;
                    let loss = loss_of(&mut tape, data, &active, &out)?;
                    let grads = tape.backward(loss)?;
                    let g: Vec<Tensor> = bound.vars().into_iter().map(|v| grads.get(v)).collect();
                    loss_sum += tape.value(&loss).item() * active.len() as f64;
                    used += active.len();
                    match adam.step(&mut model.params_mut(), &g) {
                        Ok(()) => {}
                        Err(e @ Error::AbortNonFinite(_)) => {
                            history.aborted = Some(format!("epoch {epoch} batch {bi}: {e}"));
                            break 'epochs;
                        }
                        Err(e) => return Err(e),
                    }
                    (active.len(), exploded.len())
                }
                Err(Error::NumericalExplosion { .. }) => (0, batch.len()),
                Err(e) => return Err(e),
            };
            exploded_total += exploded;
            if exploded * 2 > active + exploded {
                streak += 1;
                if streak >= ABORT_AFTER_BATCHES {
                    history.aborted = Some(format!(
                        "epoch {epoch} batch {bi}: more than half the batch exploded in {streak} consecutive batches"
                    ));
                    break 'epochs;
                }
            } else {
                streak = 0;
            }
        }
        let val = evaluate(&model, data, &split.val, scfg, tcfg.eval_mc, eval_seed)?;
        let test_loss = if tcfg.track_test && !split.test.is_empty() {
            Some(evaluate(&model, data, &split.test, scfg, tcfg.eval_mc, eval_seed)?.loss)
        } else {
            None
        };
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: if used > 0 { loss_sum / used as f64 } else { f64::NAN },
            val_loss: val.loss,
            val_metric: val.headline(),
            test_loss,
            exploded: exploded_total,
        });
        history.wall_clock.push(started.elapsed().as_secs_f64());
        log::info!("epoch {epoch}: train {:.4} val {:.4} metric {:.4}", loss_sum / used.max(1) as f64, val.loss, val.headline());
        if val.loss < history.best_val_loss {
            history.best_val_loss = val.loss;
            history.best_epoch = epoch;
            best = model.clone();
        } else if let Some(p) = tcfg.patience {
            if epoch - history.best_epoch >= p {
                history.stopped_early = true;
                break;
            }
        }
    }
    let model = if history.best_epoch > 0 { best } else { model };
    Ok(TrainOutcome { model, history })
}

/// Seed used for validation draws inside [`train`].
pub fn validation_seed(root: u64) -> u64 {
    derive(root, &[EVAL])
}
