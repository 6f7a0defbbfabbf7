use std::fs;

use nsde_core::data::*;
use nsde_core::path::IrregularSeries;
use nsde_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spirals(n: usize, noise: f64, seed: u64) -> Dataset {
    synth(&SynthSpec { kind: SynthKind::Spirals, n_samples: n, length: 16, noise, seed }).unwrap()
}

#[test]
fn csv_single_sample() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.csv");
    fs::write(&p, "sample_id,time,channel,value\na,0.0,0,1.5\na,1.0,0,2.5\n").unwrap();
    let ds = load_csv(&p).unwrap();
    assert_eq!(ds.len(), 1);
    let s = &ds.samples[0];
    assert_eq!(s.times, vec![0.0, 1.0]);
    assert_eq!(s.mask, vec![true, true]);
    assert_eq!(s.label, None);
}

#[test]
fn csv_marks_absent_cells_missing_and_sorts_times() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.csv");
    fs::write(&p, "sample_id,time,channel,value\nx,2,0,5\nx,0,1,1\nx,0,0,3\nx,1,1,2\n").unwrap();
    fs::write(labels_path_for(&p), "sample_id,label\nx,1\n").unwrap();
    let ds = load_csv(&p).unwrap();
    let s = &ds.samples[0];
    assert_eq!(s.times, vec![0.0, 1.0, 2.0]);
    assert_eq!(s.mask, vec![true, true, false, true, true, false]);
    assert_eq!(s.label, Some(1));
    assert_eq!(ds.n_classes, 2);
}

#[test]
fn csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("spirals.csv");
    let ds = inject_missing(&spirals(20, 0.1, 3), 0.3, 9).unwrap().dataset;
    save_csv(&ds, &p).unwrap();
    let back = load_csv(&p).unwrap();
    assert_eq!(back.len(), ds.len());
    assert_eq!(back.n_classes, 2);
    assert_eq!(back.content_hash(), ds.content_hash());
    for (a, b) in back.samples.iter().zip(&ds.samples) {
        assert_eq!(a.times, b.times);
        assert_eq!(a.mask, b.mask);
        assert_eq!(a.label, b.label);
        for i in 0..a.len() {
            for c in 0..a.n_channels {
                if a.observed(i, c) {
                    assert_eq!(a.value(i, c).to_bits(), b.value(i, c).to_bits());
                }
            }
        }
    }
}

#[test]
fn csv_duplicate_triple_names_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.csv");
    fs::write(&p, "sample_id,time,channel,value\na,0,0,1\na,1,0,2\na,0,0,3\n").unwrap();
    match load_csv(&p) {
        Err(Error::Parse { line, message }) => {
            assert_eq!(line, 4);
            assert!(message.contains("duplicate"));
        }
        other => panic!("expected parse error, got {other:?}"),
    }
    fs::write(&p, "sample_id,time,channel,value\na,zero,0,1\n").unwrap();
    assert!(matches!(load_csv(&p), Err(Error::Parse { line: 2, .. })));
}

#[test]
fn zero_rate_leaves_data_unchanged() {
    let ds = spirals(10, 0.1, 1);
    let c = inject_missing(&ds, 0.0, 4).unwrap();
    assert_eq!(c.dataset, ds);
    assert_eq!(c.cells_dropped, 0);
}

#[test]
fn dropped_fraction_is_binomial() {
    let ds = synth(&SynthSpec { kind: SynthKind::Spirals, n_samples: 500, length: 100, noise: 0.0, seed: 2 }).unwrap();
    let cells = ds.n_observed();
    assert_eq!(cells, 100_000);
    let c = inject_missing(&ds, 0.5, 8).unwrap();
    let frac = c.cells_dropped as f64 / cells as f64;
    let se = (0.25 / cells as f64).sqrt();
    assert!((frac - 0.5).abs() < 3.0 * se, "{frac}");
}

#[test]
fn extreme_rate_keeps_one_observation_per_channel() {
    let s = IrregularSeries::dense(vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2, Some(0)).unwrap();
    let ds = Dataset::new("t", vec![s; 50], 2, 1, "test").unwrap();
    let c = inject_missing(&ds, 0.999, 1).unwrap();
    for s in &c.dataset.samples {
        for ch in 0..2 {
            assert!((0..3).filter(|&i| s.observed(i, ch)).count() >= 1);
        }
        s.validate().unwrap();
    }
}

#[test]
fn corruption_only_masks() {
    let ds = spirals(30, 0.2, 5);
    let c = inject_missing(&ds, 0.7, 2).unwrap().dataset;
    for (a, b) in c.samples.iter().zip(&ds.samples) {
        assert_eq!(a.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert!(a.mask.iter().zip(&b.mask).all(|(x, y)| !*x || *y));
    }
}

#[test]
fn uniform_scale_identity_and_endpoints() {
    let s = IrregularSeries::dense((0..5).map(f64::from).collect(), vec![1.0, 2.0, 3.0, 4.0, 5.0], 1, None).unwrap();
    let ds = Dataset::new("t", vec![s], 1, 0, "test").unwrap();
    let r = uniform_scale(&ds, Some(5)).unwrap();
    assert_eq!(r.collisions, 0);
    assert_eq!(r.dataset.samples[0].times, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    assert_eq!(r.dataset.samples[0].values, vec![1.0, 2.0, 3.0, 4.0, 5.0]);

    let s = IrregularSeries::dense(vec![3.0, 7.0], vec![1.0, 2.0], 1, None).unwrap();
    let ds = Dataset::new("t", vec![s], 1, 0, "test").unwrap();
    let r = uniform_scale(&ds, Some(5)).unwrap();
    assert_eq!(r.dataset.samples[0].mask, vec![true, false, false, false, true]);
}

#[test]
fn uniform_scale_ties_go_earlier_and_collisions_keep_later() {
    // 0.125 of the way lands exactly between grid points 0 and 1 of a 5-point grid.
    let s = IrregularSeries::dense(vec![0.0, 0.125, 0.25, 1.0], vec![1.0, 2.0, 3.0, 4.0], 1, None).unwrap();
    let ds = Dataset::new("t", vec![s], 1, 0, "test").unwrap();
    let r = uniform_scale(&ds, Some(5)).unwrap();
    let out = &r.dataset.samples[0];
    assert_eq!(r.collisions, 1);
    assert_eq!(out.value(0, 0), 2.0);
    assert_eq!(out.value(1, 0), 3.0);
}

#[test]
fn uniform_scale_random_lengths_share_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let samples: Vec<IrregularSeries> = (0..30)
        .map(|_| {
            let n = rng.gen_range(2..40);
            let mut t: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
            t.sort_by(f64::total_cmp);
            t.dedup();
            let n = t.len();
            IrregularSeries::dense(t, (0..n).map(|_| rng.gen()).collect(), 1, None).unwrap()
        })
        .collect();
    let ds = Dataset::new("t", samples, 1, 0, "test").unwrap();
    let r = uniform_scale(&ds, None).unwrap();
    let longest = ds.samples.iter().map(|s| s.len()).max().unwrap();
    for s in &r.dataset.samples {
        assert_eq!(s.times.len(), longest);
        assert_eq!(s.times, r.dataset.samples[0].times);
    }
}

#[test]
fn normalization_uses_train_statistics() {
    let train = spirals(40, 0.3, 1);
    let stats = ChannelStats::fit(&train);
    let normed = normalize(&train, &stats).unwrap();
    let again = ChannelStats::fit(&normed);
    for c in 0..2 {
        assert!(again.mean[c].abs() < 1e-9);
        assert!((again.std[c].powi(2) - 1.0).abs() < 1e-9);
    }
    let mut shifted = spirals(40, 0.3, 2);
    for s in &mut shifted.samples {
        for v in &mut s.values {
            *v += 5.0;
        }
    }
    let test = normalize(&shifted, &stats).unwrap();
    assert!(ChannelStats::fit(&test).mean[0] > 1.0);
}

#[test]
fn constant_channel_passes_through() {
    let s = IrregularSeries::dense(vec![0.0, 1.0, 2.0], vec![3.0, 1.0, 3.0, 2.0, 3.0, 3.0], 2, None).unwrap();
    let ds = Dataset::new("t", vec![s], 2, 0, "test").unwrap();
    let stats = ChannelStats::fit(&ds);
    assert_eq!(stats.constant, vec![true, false]);
    let out = normalize(&ds, &stats).unwrap();
    assert_eq!(out.samples[0].value(1, 0), 3.0);
}

#[test]
fn noiseless_spirals_separate_at_quarter_period() {
    for scale in [0.5, 1.0, 1.4] {
        assert!(spiral_point(0.25, scale, false).1 > 0.0);
        assert!(spiral_point(0.25, scale, true).1 < 0.0);
    }
    // Matched filter on sin(2 pi t): its weight peaks at the quarter period.
    let ds = spirals(200, 0.0, 7);
    let correct = ds
        .samples
        .iter()
        .filter(|s| {
            let score: f64 = (0..s.len()).map(|i| s.value(i, 1) * (2.0 * std::f64::consts::PI * s.times[i]).sin()).sum();
            (score < 0.0) as usize == s.label.unwrap()
        })
        .count();
    assert_eq!(correct, 200);
}

#[test]
fn synth_is_deterministic_and_balanced() {
    for kind in [SynthKind::Spirals, SynthKind::DampedOscillator, SynthKind::OuVsGbm] {
        for n in [4, 9, 30] {
            let spec = SynthSpec { kind, n_samples: n, length: 12, noise: 0.1, seed: 3 };
            let a = synth(&spec).unwrap();
            assert_eq!(a, synth(&spec).unwrap());
            let ones = a.samples.iter().filter(|s| s.label == Some(1)).count();
            assert!((n - ones).abs_diff(ones) <= 1);
            for s in &a.samples {
                assert_eq!(s.len(), 12);
                assert_eq!(s.times[0], 0.0);
                assert_eq!(s.times[11], 1.0);
                assert!(s.values.iter().all(|v| v.is_finite()));
            }
        }
    }
    assert!(synth(&SynthSpec { n_samples: 3, ..SynthSpec::default() }).is_err());
}

#[test]
fn content_hash_ignores_masked_values() {
    let ds = inject_missing(&spirals(10, 0.1, 1), 0.5, 1).unwrap().dataset;
    let mut other = ds.clone();
    for s in &mut other.samples {
        for (v, m) in s.values.iter_mut().zip(&s.mask) {
            if !m {
                *v = 123.0;
            }
        }
    }
    assert_eq!(ds.content_hash(), other.content_hash());
    assert_ne!(ds.content_hash(), spirals(10, 0.1, 2).content_hash());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn corruption_preserves_series_invariants(rate in 0.0f64..0.99, seed in any::<u64>()) {
        let ds = spirals(8, 0.1, 4);
        let c = inject_missing(&ds, rate, seed).unwrap();
        c.dataset.validate().unwrap();
        prop_assert_eq!(c.dataset.n_observed() + c.cells_dropped, ds.n_observed());
    }
}
