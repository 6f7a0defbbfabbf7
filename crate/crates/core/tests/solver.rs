use nsde_core::autodiff::{Eval, Tensor};
use nsde_core::data::{synth, SynthKind, SynthSpec};
use nsde_core::error::Error;
use nsde_core::model::{presets, DiffusionForm, ModelConfig, ModelKind, SdeModel};
use nsde_core::path::{ControlledPath, PathScheme};
use nsde_core::solver::*;
use nsde_core::train::gradient_suite;

fn flat() -> ControlledPath {
    ControlledPath::flat(1)
}

fn spiral_paths(n: usize) -> Vec<ControlledPath> {
    let ds = synth(&SynthSpec { kind: SynthKind::Spirals, n_samples: n.max(4), length: 16, noise: 0.1, seed: 3 }).unwrap();
    ds.samples[..n].iter().map(|s| ControlledPath::build(s, PathScheme::NaturalCubic).unwrap()).collect()
}

#[test]
fn constant_drift_is_integrated_exactly() {
    // dz = mu dt with sigma = 0: Euler is exact for any step count.
    let mu = 0.37;
    let mut model = presets::without_noise(&presets::linear_lsde(&presets::diagonal(1, 0.0), 0.0).unwrap());
    model.gamma.layers[0].bias.data_mut()[0] = mu;
    let path = flat();
    for n in [1, 7, 100] {
        let cfg = SolveConfig { n_steps: n, ..SolveConfig::default() };
        let mut e = Eval;
        let b = model.bind(&mut e);
        let traj = solve_from(&mut e, &b, Tensor::zeros(vec![1, 1]), &[&path], &cfg.noise(vec![0], 1), &cfg).unwrap();
        assert!((traj.terminal().item() - mu).abs() < 1e-14);
        assert_eq!(traj.states.len(), n + 1);
        assert!((traj.times[n] - 1.0).abs() < 1e-12);
    }
}

#[test]
fn gbm_log_space_matches_closed_form_per_path() {
    let r = gbm_oracle(0.05, 0.2, 1.0, 100, 2000, 7).unwrap();
    assert!(r.max_log_error < 1e-12, "{r:?}");
    assert!(r.z_score().abs() < 3.0, "{r:?}");
    assert!((r.expected - 0.05f64.exp()).abs() < 1e-15);
}

#[test]
fn ou_variance_on_short_horizon() {
    let r = ou_oracle(1.0, 1.0, 3.0, 300, 4000, 11).unwrap();
    assert!(r.rel_error < 0.08, "{r:?}");
}

#[test]
fn zero_diffusion_reduces_to_the_ode_bitwise() {
    let paths = spiral_paths(5);
    let refs: Vec<&ControlledPath> = paths.iter().collect();
    let scfg = SolveConfig { n_steps: 20, ..SolveConfig::default() };
    let run = |m: &SdeModel, seeds: Vec<u64>| {
        let mut e = Eval;
        let b = m.bind(&mut e);
        solve(&mut e, &b, &refs, &scfg.noise(seeds, 16), &scfg).unwrap().terminal().clone()
    };
    for kind in [ModelKind::Lsde, ModelKind::Lnsde] {
        let mut cfg = ModelConfig::new(kind, 2, 2);
        cfg.seed = 4;
        let sde = SdeModel::new(cfg).unwrap();
        let quiet = presets::without_noise(&sde);
        let a = run(&quiet, (0..5).collect());
        assert_eq!(a.data(), run(&quiet, (10..15).collect()).data(), "{kind:?}");
        assert_ne!(run(&sde, (0..5).collect()).data(), a.data());
        if kind == ModelKind::Lnsde {
            // Same drift network, so the ODE model must agree bit for bit.
            let mut ode = quiet.clone();
            ode.config.kind = ModelKind::Node;
            assert_eq!(run(&ode, (0..5).collect()).data(), a.data());
        }
    }
}

#[test]
fn milstein_equals_euler_for_additive_noise() {
    let paths = spiral_paths(4);
    let refs: Vec<&ControlledPath> = paths.iter().collect();
    let mut cfg = ModelConfig::new(ModelKind::Lsde, 2, 2);
    cfg.seed = 9;
    let model = SdeModel::new(cfg).unwrap();
    let run = |scheme| {
        let scfg = SolveConfig { scheme, n_steps: 30, ..SolveConfig::default() };
        let mut e = Eval;
        let b = model.bind(&mut e);
        solve(&mut e, &b, &refs, &scfg.noise((0..4).collect(), 16), &scfg).unwrap().terminal().clone()
    };
    assert_eq!(run(Scheme::Euler).data(), run(Scheme::Milstein).data());
}

#[test]
fn milstein_falls_back_for_network_diffusion() {
    let paths = spiral_paths(2);
    let refs: Vec<&ControlledPath> = paths.iter().collect();
    let mut cfg = ModelConfig::new(ModelKind::Lnsde, 2, 2);
    cfg.diffusion = Some(DiffusionForm::Network);
    let model = SdeModel::new(cfg).unwrap();
    let scfg = SolveConfig { scheme: Scheme::Milstein, n_steps: 10, ..SolveConfig::default() };
    let mut e = Eval;
    let b = model.bind(&mut e);
    let traj = solve(&mut e, &b, &refs, &scfg.noise(vec![1, 2], 16), &scfg).unwrap();
    assert!(traj.euler_fallback);
    let euler = SolveConfig { scheme: Scheme::Euler, ..scfg.clone() };
    let t2 = solve(&mut e, &b, &refs, &euler.noise(vec![1, 2], 16), &euler).unwrap();
    assert_eq!(traj.terminal().data(), t2.terminal().data());
}

#[test]
fn strong_orders_on_gbm() {
    let gbm = GbmParams { mu: 0.05, sigma: 0.2, z0: 1.0, t_end: 1.0 };
    let levels = [16, 32, 64, 128, 256, 512];
    let e = strong_error(Scheme::Euler, gbm, &levels, 2000, 1).unwrap();
    let m = strong_error(Scheme::Milstein, gbm, &levels, 2000, 1).unwrap();
    assert!((0.4..=0.6).contains(&e.slope), "{e:?}");
    assert!((0.85..=1.15).contains(&m.slope), "{m:?}");
    assert!(m.errors.iter().zip(&e.errors).all(|(a, b)| a < b));
}

#[test]
fn explosion_is_reported_with_its_step() {
    // dz = 50 z dt from z0 = 1 passes 1e6 near t = ln(1e6) / 50.
    let model = presets::without_noise(&presets::linear_lnsde(&presets::diagonal(1, 50.0), 0.0).unwrap());
    let path = flat();
    let scfg = SolveConfig { n_steps: 100, ..SolveConfig::default() };
    let mut e = Eval;
    let b = model.bind(&mut e);
    let err = solve_from(&mut e, &b, Tensor::filled(vec![1, 1], 1.0), &[&path], &scfg.noise(vec![0], 1), &scfg).unwrap_err();
    // (1 + 0.5)^k > 1e6 first at k = 35.
    assert!(matches!(err, Error::NumericalExplosion { step: 35, .. }), "{err:?}");
}

#[test]
fn gsde_states_are_nonnegative_and_zero_absorbs() {
    let paths = spiral_paths(6);
    let refs: Vec<&ControlledPath> = paths.iter().collect();
    for seed in 0..5 {
        let mut cfg = ModelConfig::new(ModelKind::Gsde, 2, 2);
        cfg.seed = seed;
        let model = SdeModel::new(cfg).unwrap();
        let scfg = SolveConfig { n_steps: 50, ..SolveConfig::default() };
        let mut e = Eval;
        let b = model.bind(&mut e);
        let x0 = initial_inputs(&refs);
        let mut z0 = b.init_state(&mut e, &x0).unwrap();
        let cols = z0.cols();
        for r in 0..6 {
            z0.data_mut()[r * cols + 2] = 0.0;
        }
        let traj = solve_from(&mut e, &b, z0, &refs, &scfg.noise((0..6).collect(), cols), &scfg).unwrap();
        for z in &traj.states {
            assert!(z.data().iter().all(|&v| v >= 0.0));
            assert!((0..6).all(|r| z.at(r, 2) == 0.0));
        }
    }
}

#[test]
fn gsde_rejects_negative_initial_state() {
    let model = presets::constant_gsde(1, 0.1, 0.1).unwrap();
    let path = flat();
    let scfg = SolveConfig::default();
    let mut e = Eval;
    let b = model.bind(&mut e);
    let err = solve_from(&mut e, &b, Tensor::filled(vec![1, 1], -0.5), &[&path], &scfg.noise(vec![0], 1), &scfg).unwrap_err();
    assert!(matches!(err, Error::NegativeStateGsde { .. }));
}

#[test]
fn backprop_through_solve_matches_finite_differences() {
    let r = gradient_suite(0).unwrap();
    assert!(r.network < 1e-5, "{r:?}");
    assert_eq!(r.models.len(), 4);
    assert!(r.worst_model() < 1e-4, "{r:?}");
}

#[test]
fn solve_is_deterministic() {
    let paths = spiral_paths(3);
    let refs: Vec<&ControlledPath> = paths.iter().collect();
    let model = SdeModel::new(ModelConfig::new(ModelKind::Lnsde, 2, 2)).unwrap();
    let scfg = SolveConfig::default();
    let run = || {
        let mut e = Eval;
        let b = model.bind(&mut e);
        solve(&mut e, &b, &refs, &scfg.noise(vec![5, 6, 7], 16), &scfg).unwrap().terminal().clone()
    };
    assert_eq!(run().data(), run().data());
}
