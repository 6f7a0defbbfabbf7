use nsde_core::data::{synth, Dataset, SynthKind, SynthSpec};
use nsde_core::model::{ModelConfig, ModelKind, SdeModel};
use nsde_core::path::{IrregularSeries, PathScheme};
use nsde_core::solver::SolveConfig;
use nsde_core::train::*;

fn small_model(kind: ModelKind, out: usize, seed: u64) -> SdeModel {
    let mut cfg = ModelConfig::new(kind, 2, out);
    cfg.latent_dim = 4;
    cfg.time_dim = 4;
    cfg.hidden = 8;
    cfg.n_layers = 1;
    cfg.readout_hidden = Some(8);
    cfg.seed = seed;
    SdeModel::new(cfg).unwrap()
}

fn spirals(n: usize) -> (Prepared, Split) {
    let ds = synth(&SynthSpec { kind: SynthKind::Spirals, n_samples: n, length: 8, noise: 0.1, seed: 2 }).unwrap();
    let sp = split(&ds.labels(), [0.6, 0.2, 0.2], 1).unwrap();
    (Prepared::new(&ds, Task::Classification, PathScheme::NaturalCubic).unwrap(), sp)
}

fn scfg() -> SolveConfig {
    SolveConfig { n_steps: 10, ..SolveConfig::default() }
}

fn flat_params(m: &SdeModel) -> Vec<f64> {
    m.params().iter().flat_map(|t| t.data().to_vec()).collect()
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let (data, sp) = spirals(40);
    let model = small_model(ModelKind::Lnsde, 2, 0);
    let tcfg = TrainConfig { lr: 0.0, max_epochs: 2, patience: None, ..TrainConfig::default() };
    let out = train(model.clone(), &data, &sp, &tcfg, &scfg()).unwrap();
    assert_eq!(flat_params(&out.model), flat_params(&model));
    assert_eq!(out.history.epochs.len(), 2);
}

#[test]
fn constant_validation_loss_stops_after_patience() {
    // With lr = 0 the first epoch stays best, so training ends at 1 + patience.
    let (data, sp) = spirals(40);
    let tcfg = TrainConfig { lr: 0.0, max_epochs: 50, patience: Some(3), ..TrainConfig::default() };
    let out = train(small_model(ModelKind::Lsde, 2, 1), &data, &sp, &tcfg, &scfg()).unwrap();
    assert!(out.history.stopped_early);
    assert_eq!(out.history.best_epoch, 1);
    assert_eq!(out.history.epochs.len(), 4);
}

#[test]
fn training_is_deterministic() {
    let (data, sp) = spirals(40);
    let tcfg = TrainConfig { max_epochs: 3, lr: 1e-2, seed: 5, ..TrainConfig::default() };
    let a = train(small_model(ModelKind::Lnsde, 2, 3), &data, &sp, &tcfg, &scfg()).unwrap();
    let b = train(small_model(ModelKind::Lnsde, 2, 3), &data, &sp, &tcfg, &scfg()).unwrap();
    assert_eq!(serde_json::to_string(&a.history).unwrap(), serde_json::to_string(&b.history).unwrap());
    assert_eq!(flat_params(&a.model), flat_params(&b.model));
}

#[test]
fn best_parameters_are_restored() {
    let (data, sp) = spirals(40);
    let tcfg = TrainConfig { max_epochs: 6, lr: 3e-2, patience: None, seed: 8, ..TrainConfig::default() };
    let out = train(small_model(ModelKind::Gsde, 2, 4), &data, &sp, &tcfg, &scfg()).unwrap();
    let m = evaluate(&out.model, &data, &sp.val, &scfg(), tcfg.eval_mc, validation_seed(tcfg.seed)).unwrap();
    assert!((m.loss - out.history.best_val_loss).abs() < 1e-12);
    let best = &out.history.epochs[out.history.best_epoch - 1];
    assert_eq!(best.val_loss, out.history.best_val_loss);
    assert!(out.history.epochs.iter().all(|e| e.val_loss >= out.history.best_val_loss));
}

#[test]
fn readout_multiplier_scales_first_step() {
    // One full batch, one Adam step: each coordinate moves by about lr times its multiplier.
    let (data, sp) = spirals(40);
    let lr = 1e-4;
    let model = small_model(ModelKind::Lnsde, 2, 6);
    let tcfg = TrainConfig { lr, max_epochs: 1, batch_size: 1000, readout_lr_multiplier: 100.0, clip_norm: None, ..TrainConfig::default() };
    let out = train(model.clone(), &data, &sp, &tcfg, &scfg()).unwrap();
    let before = model.params();
    let after = out.model.params();
    let n = before.len();
    let max_delta = |i: usize| before[i].data().iter().zip(after[i].data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    for i in 0..n - 2 {
        assert!(max_delta(i) <= lr * (1.0 + 1e-6), "param {i}: {}", max_delta(i));
    }
    for i in n - 2..n {
        assert!((max_delta(i) / (100.0 * lr) - 1.0).abs() < 1e-3, "param {i}: {}", max_delta(i));
    }
}

#[test]
fn ode_predictions_ignore_monte_carlo_count() {
    let (data, sp) = spirals(20);
    let model = small_model(ModelKind::Node, 2, 2);
    let a = predict(&model, &data, &sp.test, &scfg(), 1, 3).unwrap();
    let b = predict(&model, &data, &sp.test, &scfg(), 5, 3).unwrap();
    assert!(a.outputs.data().iter().zip(b.outputs.data()).all(|(x, y)| (x - y).abs() < 1e-12));
}

fn separable(n: usize) -> Dataset {
    let samples = (0..n)
        .map(|i| {
            let c = i % 2;
            let level = if c == 0 { 1.0 } else { -1.0 };
            let times: Vec<f64> = (0..8).map(|k| k as f64 / 7.0).collect();
            let values = times.iter().flat_map(|&t| [level * (1.0 + 0.1 * t), 0.5 * t]).collect();
            IrregularSeries::new(times, values, vec![true; 16], 2, Some(c)).unwrap()
        })
        .collect();
    Dataset::new("separable", samples, 2, 2, "test").unwrap()
}

#[test]
fn separable_set_is_learned() {
    let ds = separable(60);
    let sp = split(&ds.labels(), [0.6, 0.2, 0.2], 0).unwrap();
    let data = Prepared::new(&ds, Task::Classification, PathScheme::NaturalCubic).unwrap();
    let tcfg = TrainConfig { lr: 1e-2, max_epochs: 20, patience: None, batch_size: 16, ..TrainConfig::default() };
    let out = train(small_model(ModelKind::Lnsde, 2, 0), &data, &sp, &tcfg, &scfg()).unwrap();
    let m = evaluate(&out.model, &data, &sp.test, &scfg(), 1, 0).unwrap();
    assert!(m.accuracy.unwrap() >= 0.95, "{m:?}");
}

#[test]
fn repeated_explosions_abort_without_error() {
    let (data, sp) = spirals(40);
    let tiny = SolveConfig { explosion_threshold: 1e-3, ..scfg() };
    let tcfg = TrainConfig { max_epochs: 3, batch_size: 4, ..TrainConfig::default() };
    let out = train(small_model(ModelKind::Lnsde, 2, 0), &data, &sp, &tcfg, &tiny).unwrap();
    assert!(out.history.aborted.is_some());
    assert!(out.history.epochs.is_empty());
}

#[test]
fn exploded_evaluation_counts_as_uniform_and_wrong() {
    let (data, sp) = spirals(20);
    let tiny = SolveConfig { explosion_threshold: 1e-3, ..scfg() };
    let m = evaluate(&small_model(ModelKind::Lnsde, 2, 0), &data, &sp.test, &tiny, 1, 0).unwrap();
    assert_eq!(m.n_exploded, m.n);
    assert!((m.loss - 2f64.ln()).abs() < 1e-12);
    assert_eq!(m.accuracy, Some(0.0));
    assert_eq!(m.auroc, Some(0.5));
}

#[test]
fn regression_tasks_score_held_out_rows() {
    let ds = synth(&SynthSpec { kind: SynthKind::DampedOscillator, n_samples: 30, length: 10, noise: 0.0, seed: 1 }).unwrap();
    let sp = split(&ds.labels(), [0.6, 0.2, 0.2], 0).unwrap();
    for task in [Task::Interpolation, Task::Forecasting] {
        let data = Prepared::new(&ds, task, PathScheme::NaturalCubic).unwrap();
        assert_eq!(data.output_dim, ds.n_channels);
        let model = small_model(ModelKind::Lsde, data.output_dim, 0);
        let mut cfg = model.config.clone();
        cfg.input_dim = ds.n_channels;
        let model = SdeModel::new(cfg).unwrap();
        let tcfg = TrainConfig { task, max_epochs: 2, ..TrainConfig::default() };
        let out = train(model, &data, &sp, &tcfg, &scfg()).unwrap();
        let m = evaluate(&out.model, &data, &sp.test, &scfg(), 1, 0).unwrap();
        assert!(m.mse.unwrap().is_finite() && m.accuracy.is_none());
    }
}

#[test]
fn history_csv_has_one_row_per_epoch() {
    let (data, sp) = spirals(20);
    let tcfg = TrainConfig { max_epochs: 2, patience: None, ..TrainConfig::default() };
    let out = train(small_model(ModelKind::Lsde, 2, 0), &data, &sp, &tcfg, &scfg()).unwrap();
    let csv = out.history.to_csv();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("epoch,train_loss,val_loss,val_metric"));
}
